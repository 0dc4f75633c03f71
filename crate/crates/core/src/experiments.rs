//! Sweeps over the lattice period: resolvent errors, spectra, and the
//! interface defect, with rate fits and CSV/SVG output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use crate::capacity::{calibrate_with_core, capacity_with_core, CapacityProblem, Shape};
use crate::corrector::{build_corrector, corrector_properties, hole_potentials, CorrectorReport, HoleCoefficient};
use crate::eigen::{eigen_smallest, EigenOptions, Spectrum};
use crate::error::StudyError;
use crate::fem::{lift_map, FeFunction, Resolvent};
use crate::geometry::{lattice_count, make_periodic_config, rate_params, Domain2D, GammaProfile, KappaRecipe, RateParams, SieveConfig};
use crate::mesh::{patch_frames, triangulate, CrackMesh, MeshParams, SieveMesh, VertexSide};

/// Right-hand side of the resolvent problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// `sign(y) cos(pi x / L) (1 - |y|/H)^2`
    Odd,
    /// `cos(pi x / L) (1 - |y|/H)^2`
    Even,
    Constant(f64),
}

impl Source {
    pub fn eval(&self, dom: &Domain2D, x: f64, y: f64, side: VertexSide) -> f64 {
        let profile = || (PI * x / dom.width).cos() * (1.0 - y.abs() / dom.half_height).powi(2);
        match self {
            Source::Odd => {
                let s = match side {
                    VertexSide::Minus => -1.0,
                    VertexSide::Plus => 1.0,
                    VertexSide::Shared => 0.0,
                };
                let s = if y > 0.0 { 1.0 } else if y < 0.0 { -1.0 } else { s };
                s * profile()
            }
            Source::Even => profile(),
            Source::Constant(c) => *c,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Source::Odd => "odd".into(),
            Source::Even => "even".into(),
            Source::Constant(c) => format!("constant({c})"),
        }
    }
}

/// Hole-size rule of an eps-periodic family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Half-widths calibrated on the patch disk meshes to `cap / (4 eps) = gamma`.
    Calibrated { gamma: f64 },
    /// `d = exp(-eps^(-power))`; strengths vanish for `power > 1` and the
    /// limit interface is insulating.
    SmallHoles { power: f64 },
}

impl Family {
    pub fn name(&self) -> String {
        match self {
            Family::Calibrated { gamma } => format!("calibrated(gamma={gamma})"),
            Family::SmallHoles { power } => format!("small-holes(power={power})"),
        }
    }

    pub fn kappa_recipe(&self) -> KappaRecipe {
        match self {
            Family::Calibrated { .. } => KappaRecipe::Regular,
            Family::SmallHoles { .. } => KappaRecipe::SmallHoles,
        }
    }

    /// Strength of the limit interface.
    pub fn target_gamma(&self) -> f64 {
        match self {
            Family::Calibrated { gamma } => *gamma,
            Family::SmallHoles { .. } => 0.0,
        }
    }
}

/// Mesh size rule: `h = eps / cells_per_eps`, background coarsened to `h_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshBudget {
    pub cells_per_eps: usize,
    pub h_max: f64,
    /// Extra halvings tried when the half-h check fails.
    pub max_refinements: usize,
}

impl MeshBudget {
    pub fn params(&self, eps: f64) -> MeshParams {
        let h = eps / self.cells_per_eps as f64;
        MeshParams::graded(h, self.h_max)
    }
}

/// One member of a family, meshed, with its interface strength.
#[derive(Debug, Clone)]
pub struct Instance {
    pub config: SieveConfig,
    pub mesh: SieveMesh,
    /// Strength used by the limit problem: the calibrated `cap / (4 eps)`
    /// or zero.
    pub gamma: GammaProfile,
    pub capacities: Vec<f64>,
    pub rates: RateParams,
}

fn small_hole_width(eps: f64, power: f64) -> Result<f64, StudyError> {
    let d = (-eps.powf(-power)).exp();
    if !(d > 1e-300) {
        return Err(StudyError::Input(format!("small-hole width underflows at eps = {eps}")));
    }
    Ok(d)
}

/// Calibrated or prescribed half-widths of one family member on the
/// patch layout for `params`, with the capacities of the patch disk meshes.
pub fn family_widths(domain: &Domain2D, eps: f64, family: Family, params: MeshParams) -> Result<(f64, f64), StudyError> {
    let rho = 0.5 * eps;
    let centers: Vec<(f64, f64)> = (0..lattice_count(domain.width, eps)).map(|k| ((k as f64 + 0.5) * eps, rho)).collect();
    let frames = patch_frames(domain, &centers, params)?;
    let f = frames.first().ok_or_else(|| StudyError::Input(format!("no holes fit for eps = {eps}")))?;
    if frames.iter().any(|g| g.n_half != f.n_half || (g.r_core - f.r_core).abs() > 1e-12 * f.r_core) {
        return Err(StudyError::Input("periodic patches differ; choose h dividing eps".into()));
    }
    match family {
        Family::Calibrated { gamma } => {
            let c = calibrate_with_core(gamma, eps, rho, f.n_half, f.r_core)?;
            Ok((c.d, c.capacity))
        }
        Family::SmallHoles { power } => {
            let d = small_hole_width(eps, power)?;
            let cap = capacity_with_core(CapacityProblem::new(2, d, rho, Shape::Slit2d)?, f.n_half, f.r_core)?.capacity;
            Ok((d, cap))
        }
    }
}

pub fn build_instance(domain: &Domain2D, eps: f64, family: Family, params: MeshParams) -> Result<Instance, StudyError> {
    let (d, cap) = family_widths(domain, eps, family, params)?;
    let gamma = match family {
        Family::Calibrated { .. } => GammaProfile::Constant(cap / (4.0 * eps)),
        Family::SmallHoles { .. } => GammaProfile::Constant(0.0),
    };
    let config = make_periodic_config(*domain, eps, &|_| d, GammaProfile::Constant(family.target_gamma()))?;
    let mesh = triangulate(&config, params)?;
    let rates = rate_params(&config, family.kappa_recipe());
    let capacities = vec![cap; config.holes.len()];
    Ok(Instance { config, mesh, gamma, capacities, rates })
}

/// Instance of an explicit configuration; the limit uses the configured `gamma`.
pub fn instance_from_config(config: SieveConfig, params: MeshParams) -> Result<Instance, StudyError> {
    let mesh = triangulate(&config, params)?;
    let capacities = hole_potentials(&mesh, &config.holes)?.into_iter().map(|p| p.capacity).collect();
    let rates = rate_params(&config, KappaRecipe::Regular);
    Ok(Instance { gamma: config.gamma.clone(), config, mesh, capacities, rates })
}

/// Perforated and limit solutions of one source on one instance, both on
/// the fully cracked mesh.
pub struct PairSolution {
    pub full: CrackMesh,
    pub u_eps: Vec<f64>,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub limit: Resolvent,
}

pub fn solve_pair(inst: &Instance, source: Source) -> Result<PairSolution, StudyError> {
    let dom = inst.config.domain;
    let perf = inst.mesh.perforated()?;
    let full = inst.mesh.full_crack()?;
    let f = FeFunction::interpolate(&full, &|x, y, s| source.eval(&dom, x, y, s)).values;
    let lift = lift_map(&perf, &full)?;
    let limit = Resolvent::homogenized(&full, &inst.gamma)?;
    let mf = limit.asm.mass.apply(&f);
    let mut rhs = vec![0.0; perf.n_vertices()];
    for (v, &p) in lift.iter().enumerate() {
        rhs[p] += mf[v];
    }
    let sieve = Resolvent::perforated(&perf)?;
    let (ue, _) = sieve.solve_load(&rhs, None)?;
    let u_eps = lift.iter().map(|&p| ue[p]).collect();
    let (u, _) = limit.solve_load(&mf, None)?;
    Ok(PairSolution { full, u_eps, u, f, limit })
}

impl PairSolution {
    fn diff(&self) -> Vec<f64> {
        self.u_eps.iter().zip(&self.u).map(|(a, b)| a - b).collect()
    }

    pub fn f_norm(&self) -> f64 {
        self.limit.asm.mass.quad_form(&self.f).max(0.0).sqrt()
    }

    pub fn u_norm(&self) -> f64 {
        self.limit.asm.mass.quad_form(&self.u).max(0.0).sqrt()
    }

    /// `|u_eps - u|` in L2.
    pub fn err_l2(&self) -> f64 {
        self.limit.asm.mass.quad_form(&self.diff()).max(0.0).sqrt()
    }

    /// Broken H1 norm of `u_eps - u - w`.
    pub fn err_h1(&self, w: Option<&[f64]>) -> f64 {
        let mut e = self.diff();
        if let Some(w) = w {
            e.iter_mut().zip(w).for_each(|(a, b)| *a -= b);
        }
        let a = &self.limit.asm;
        (a.stiffness.quad_form(&e) + a.mass.quad_form(&e)).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFlag {
    Ok,
    /// The half-h re-solve moved `err_l2` by 10% or more.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub h: f64,
    pub d: f64,
    pub mu: f64,
    pub kappa: f64,
    /// Errors relative to `|f|`.
    pub err_l2: f64,
    pub err_h1c: f64,
    pub err_h1u: f64,
    pub half_h_change: f64,
    pub corrector: CorrectorReport,
    pub coefficients: Vec<HoleCoefficient>,
    pub f_norm: f64,
    pub flag: RowFlag,
}

impl ConvergenceRow {
    pub fn ratio_l2(&self) -> f64 {
        self.err_l2 / self.mu
    }
}

struct Measured {
    err_l2: f64,
    err_h1c: f64,
    err_h1u: f64,
    corrector: CorrectorReport,
    coefficients: Vec<HoleCoefficient>,
    f_norm: f64,
    d: f64,
    rates: RateParams,
}

fn measure(domain: &Domain2D, eps: f64, family: Family, source: Source, params: MeshParams) -> Result<Measured, StudyError> {
    let inst = build_instance(domain, eps, family, params)?;
    let pair = solve_pair(&inst, source)?;
    let u = FeFunction::new(&pair.full, pair.u.clone());
    let pots = hole_potentials(&inst.mesh, &inst.config.holes)?;
    let w = build_corrector(&u, &pots, domain.width)?;
    let corrector = corrector_properties(&w, &u, &pair.limit.asm, &inst.gamma);
    let fnorm = pair.f_norm();
    Ok(Measured {
        err_l2: pair.err_l2() / fnorm,
        err_h1c: pair.err_h1(Some(&w.field.values)) / fnorm,
        err_h1u: pair.err_h1(None) / fnorm,
        corrector,
        coefficients: w.coefficients,
        f_norm: fnorm,
        d: inst.config.holes[0].half_width,
        rates: inst.rates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSpec {
    pub domain: Domain2D,
    pub eps: Vec<f64>,
    pub family: Family,
    pub source: Source,
    pub budget: MeshBudget,
}

/// Ordinary least-squares fit of `log err` against `log mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest residual of the fit in log space.
    pub max_deviation: f64,
}

pub fn fit_rate(rows: &[(f64, f64)]) -> Result<RateFit, StudyError> {
    if rows.len() < 3 {
        return Err(StudyError::TooFewRows(rows.len()));
    }
    if rows.iter().any(|&(m, e)| !(m > 0.0 && e > 0.0)) {
        return Err(StudyError::Input("rate fits need positive rates and errors".into()));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|&(m, e)| (m.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-300 {
        return Err(StudyError::Input("rates do not vary across rows".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_deviation = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(RateFit { slope, intercept, max_deviation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub family: String,
    pub source: String,
    pub rows: Vec<ConvergenceRow>,
    pub slope_l2: Option<RateFit>,
    pub slope_h1c: Option<RateFit>,
    pub slope_h1u: Option<RateFit>,
}

impl RateReport {
    pub fn resolved(&self) -> impl Iterator<Item = &ConvergenceRow> + '_ {
        self.rows.iter().filter(|r| r.flag == RowFlag::Ok)
    }

    /// Largest over smallest `err_l2 / mu` among resolved rows.
    pub fn ratio_spread(&self) -> f64 {
        let r: Vec<f64> = self.resolved().map(|r| r.ratio_l2()).collect();
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flag != RowFlag::Ok)
    }
}

/// Sweeps eps; each row passes the half-h check or is flagged.
pub fn convergence_study(spec: &ConvergenceSpec) -> Result<RateReport, StudyError> {
    let mut eps = spec.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::with_capacity(eps.len());
    for &e in &eps {
        let mut params = spec.budget.params(e);
        let mut coarse = measure(&spec.domain, e, spec.family, spec.source, params)?;
        let mut tries = 0;
        let row = loop {
            let fine = measure(&spec.domain, e, spec.family, spec.source, params.halved())?;
            let change = (coarse.err_l2 - fine.err_l2).abs() / fine.err_l2.max(f64::MIN_POSITIVE);
            let ok = change < 0.1 || coarse.err_l2.max(fine.err_l2) < 1e-12;
            if ok || tries >= spec.budget.max_refinements {
                let flag = if ok { RowFlag::Ok } else { RowFlag::Unresolved };
                break ConvergenceRow {
                    eps: e,
                    h: params.h,
                    d: coarse.d,
                    mu: coarse.rates.mu,
                    kappa: coarse.rates.kappa,
                    err_l2: coarse.err_l2,
                    err_h1c: coarse.err_h1c,
                    err_h1u: coarse.err_h1u,
                    half_h_change: change,
                    corrector: coarse.corrector,
                    coefficients: coarse.coefficients,
                    f_norm: coarse.f_norm,
                    flag,
                };
            }
            tries += 1;
            params = params.halved();
            coarse = fine;
        };
        rows.push(row);
    }
    let fit = |sel: fn(&ConvergenceRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.flag == RowFlag::Ok).map(|r| (r.mu, sel(r))).collect();
        fit_rate(&pts).ok()
    };
    Ok(RateReport {
        family: spec.family.name(),
        source: spec.source.name(),
        slope_l2: fit(|r| r.err_l2),
        slope_h1c: fit(|r| r.err_h1c),
        slope_h1u: fit(|r| r.err_h1u),
        rows,
    })
}

/// Relative L2 gap `|u_eps - u| / |u|` of one source on one instance.
pub fn relative_gap(inst: &Instance, source: Source) -> Result<f64, StudyError> {
    let pair = solve_pair(inst, source)?;
    Ok(pair.err_l2() / pair.u_norm())
}

/// Hausdorff distance of two finite point sets on the line.
pub fn truncated_hausdorff(a: &[f64], b: &[f64]) -> f64 {
    let one_sided = |p: &[f64], q: &[f64]| p.iter().map(|x| q.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
    one_sided(a, b).max(one_sided(b, a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRow {
    pub eps: f64,
    pub m: usize,
    pub d_h: f64,
    pub mu: f64,
    pub sieve: Vec<f64>,
    pub limit: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSpec {
    pub domain: Domain2D,
    pub eps: Vec<f64>,
    pub family: Family,
    pub budget: MeshBudget,
    pub m: usize,
}

pub const MAX_SPECTRAL_COUNT: usize = 10;

pub fn sieve_spectra(inst: &Instance, m: usize) -> Result<(Spectrum, Spectrum), StudyError> {
    let perf = inst.mesh.perforated()?;
    let full = inst.mesh.full_crack()?;
    let a = Resolvent::perforated(&perf)?;
    let b = Resolvent::homogenized(&full, &inst.gamma)?;
    let opts = EigenOptions::default();
    let s = eigen_smallest(&a.asm.stiffness, &a.asm.mass, None, m, opts)?;
    let l = eigen_smallest(&b.asm.stiffness, &b.asm.mass, b.jump.as_ref(), m, opts)?;
    Ok((s, l))
}

pub fn spectral_study(spec: &SpectralSpec) -> Result<Vec<SpectralRow>, StudyError> {
    if spec.m == 0 || spec.m > MAX_SPECTRAL_COUNT {
        return Err(StudyError::Input(format!("eigen count {} outside 1..={MAX_SPECTRAL_COUNT}", spec.m)));
    }
    let mut eps = spec.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.iter()
        .map(|&e| {
            let inst = build_instance(&spec.domain, e, spec.family, spec.budget.params(e))?;
            let (s, l) = sieve_spectra(&inst, spec.m)?;
            Ok(SpectralRow {
                eps: e,
                m: spec.m,
                d_h: truncated_hausdorff(&s.resolvent_points(), &l.resolvent_points()),
                mu: inst.rates.mu,
                converged: s.all_converged() && l.all_converged(),
                sieve: s.values,
                limit: l.values,
            })
        })
        .collect()
}

/// Closed-form functions on the interface `(0, L)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `cos(k pi x / L)`
    Cosine(u32),
    /// `sin(k pi x / L)`
    Sine(u32),
    /// Coefficients in powers of `x - L/2`.
    Polynomial(Vec<f64>),
}

impl TestFunction {
    pub fn eval(&self, x: f64, width: f64) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Cosine(k) => (*k as f64 * PI * x / width).cos(),
            TestFunction::Sine(k) => (*k as f64 * PI * x / width).sin(),
            TestFunction::Polynomial(c) => {
                let t = x - 0.5 * width;
                c.iter().rev().fold(0.0, |acc, a| acc * t + a)
            }
        }
    }
}

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Composite 5-point Gauss-Legendre rule on `(a, b)`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let w = (b - a) / pieces as f64;
    let mut s = 0.0;
    for p in 0..pieces {
        let c = a + (p as f64 + 0.5) * w;
        for &(t, wt) in &GL5 {
            s += wt * f(c + 0.5 * w * t);
        }
    }
    0.5 * w * s
}

/// Number of cosine modes kept in Sobolev norms.
pub const SOBOLEV_MODES: usize = 512;

/// `H^s(0, L)` norm from the cosine coefficients with weights `(1 + (k pi / L)^2)^s`.
pub fn sobolev_norm(g: &TestFunction, width: f64, s: f64) -> f64 {
    let pieces = 4 * SOBOLEV_MODES;
    let mut total = 0.0;
    for k in 0..=SOBOLEV_MODES {
        let freq = k as f64 * PI / width;
        let a = integrate(&|x| g.eval(x, width) * (freq * x).cos(), 0.0, width, pieces);
        // |cos|^2 integrates to L for k = 0 and L/2 otherwise
        let norm_sq = if k == 0 { width } else { 0.5 * width };
        let coeff = a / norm_sq;
        total += (1.0 + freq * freq).powf(s) * coeff * coeff * norm_sq;
    }
    total.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionRow {
    pub eps: f64,
    pub lhs: f64,
    pub norm_product: f64,
    pub ratio: f64,
    pub kappa: f64,
    pub sup_gamma: f64,
    pub sup_rho: f64,
}

/// Interface defect `|sum cap_k <g><h> / 4 - int gamma g h|` with the
/// capacities in `cap` and holes `(x_k, rho_k)`.
pub fn interface_defect(holes: &[(f64, f64)], cap: &[f64], gamma: &GammaProfile, g: &TestFunction, h: &TestFunction, width: f64) -> f64 {
    let mean = |f: &TestFunction, x: f64, r: f64| integrate(&|t| f.eval(t, width), x - r, x + r, 16) / (2.0 * r);
    let sum: f64 = holes.iter().zip(cap).map(|(&(x, r), &c)| 0.25 * c * mean(g, x, r) * mean(h, x, r)).sum();
    let exact = integrate(&|x| gamma.eval(x) * g.eval(x, width) * h.eval(x, width), 0.0, width, 1024);
    (sum - exact).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionSpec {
    pub domain: Domain2D,
    pub eps: Vec<f64>,
    pub family: Family,
    pub budget: MeshBudget,
    pub g: TestFunction,
    pub h: TestFunction,
}

pub fn assumption_main_check(spec: &AssumptionSpec) -> Result<Vec<AssumptionRow>, StudyError> {
    let width = spec.domain.width;
    let np = sobolev_norm(&spec.g, width, 1.5) * sobolev_norm(&spec.h, width, 0.5);
    let gamma = GammaProfile::Constant(spec.family.target_gamma());
    let mut eps = spec.eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut cache: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    eps.iter()
        .map(|&e| {
            let (d, cap) = match cache.get(&e.to_bits()) {
                Some(&v) => v,
                None => {
                    let v = family_widths(&spec.domain, e, spec.family, spec.budget.params(e))?;
                    cache.insert(e.to_bits(), v);
                    v
                }
            };
            let config = make_periodic_config(spec.domain, e, &|_| d, gamma.clone())?;
            let rates = rate_params(&config, spec.family.kappa_recipe());
            let holes: Vec<(f64, f64)> = config.holes.iter().map(|h| (h.x(), h.guard_radius)).collect();
            let caps = vec![cap; holes.len()];
            let lhs = interface_defect(&holes, &caps, &gamma, &spec.g, &spec.h, width);
            Ok(AssumptionRow {
                eps: e,
                lhs,
                norm_product: np,
                ratio: lhs / np,
                kappa: rates.kappa,
                sup_gamma: rates.sup_gamma(),
                sup_rho: 0.5 * e,
            })
        })
        .collect()
}

/// Neumann eigenvalues of the rectangle extrapolated from two uniform
/// meshes without holes, against `pi^2 ((k/L)^2 + (l/2H)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenOracle {
    pub h: f64,
    pub exact: Vec<f64>,
    pub extrapolated: Vec<f64>,
    pub max_rel_error: f64,
}

pub fn rectangle_eigen_oracle(domain: &Domain2D, h: f64, count: usize) -> Result<EigenOracle, StudyError> {
    let config = SieveConfig::explicit(*domain, h, Vec::new(), GammaProfile::Constant(0.0))?;
    let mut levels = Vec::with_capacity(2);
    for hh in [h, 0.5 * h] {
        let cm = triangulate(&config, MeshParams::uniform(hh))?.no_sieve()?;
        let r = Resolvent::perforated(&cm)?;
        let s = eigen_smallest(&r.asm.stiffness, &r.asm.mass, None, count, EigenOptions::default())?;
        if let Some((k, res)) = s.first_failure() {
            return Err(StudyError::Input(format!("oracle eigenpair {k} did not converge (residual {res:.3e})")));
        }
        levels.push(s.values);
    }
    let extrapolated: Vec<f64> = levels[0].iter().zip(&levels[1]).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let (kx, ky) = (PI / domain.width, PI / (2.0 * domain.half_height));
    let mut exact: Vec<f64> = (0..=count).flat_map(|k| (0..=count).map(move |l| (k as f64 * kx).powi(2) + (l as f64 * ky).powi(2))).collect();
    exact.sort_by(f64::total_cmp);
    exact.truncate(count);
    let max_rel_error = exact.iter().zip(&extrapolated).map(|(e, x)| (x - e).abs() / e.max(1.0)).fold(0.0, f64::max);
    Ok(EigenOracle { h, exact, extrapolated, max_rel_error })
}

pub const CONVERGENCE_CSV_HEADER: &str = "eps,h,mu,kappa,err_l2,err_h1c,err_h1u,ratio_l2,flag";
pub const SPECTRAL_CSV_HEADER: &str = "eps,m,dH,mu";
pub const ASSUMPTION_CSV_HEADER: &str = "eps,lhs,norm_product,ratio,kappa";

pub fn write_convergence_csv<W: Write>(report: &RateReport, mut w: W) -> io::Result<()> {
    writeln!(w, "{CONVERGENCE_CSV_HEADER}")?;
    for r in &report.rows {
        let flag = match r.flag {
            RowFlag::Ok => "ok",
            RowFlag::Unresolved => "unresolved",
        };
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{flag}",
            r.eps, r.h, r.mu, r.kappa, r.err_l2, r.err_h1c, r.err_h1u, r.ratio_l2()
        )?;
    }
    Ok(())
}

pub fn write_spectral_csv<W: Write>(rows: &[SpectralRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SPECTRAL_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{:.12e},{},{:.12e},{:.12e}", r.eps, r.m, r.d_h, r.mu)?;
    }
    writeln!(w, "# dH is the Hausdorff distance between the {} lowest resolvent points of each operator only", rows.first().map_or(0, |r| r.m))?;
    Ok(())
}

pub fn write_assumption_csv<W: Write>(rows: &[AssumptionRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{ASSUMPTION_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", r.eps, r.lhs, r.norm_product, r.ratio, r.kappa)?;
    }
    Ok(())
}

/// Log-log plot of named series against `x`, with an optional reference
/// series drawn dashed.
pub fn write_loglog_svg<W: Write>(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)], reference: Option<(&str, Vec<(f64, f64)>)>, mut w: W) -> io::Result<()> {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 420.0;
    const MARGIN: f64 = 60.0;
    const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .chain(reference.iter().flat_map(|r| r.1.iter().copied()))
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if all.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#)?;
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    writeln!(w, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, WIDTH / 2.0)?;
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{x_label} (log)</text>"#, WIDTH / 2.0, HEIGHT - 15.0)?;
    writeln!(
        w,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )?;
    writeln!(w, r#"<text x="{}" y="{}" font-size="10">{:.3e}</text>"#, MARGIN, HEIGHT - MARGIN + 14.0, 10f64.powf(x0))?;
    writeln!(w, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 14.0, 10f64.powf(x1))?;
    writeln!(w, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, MARGIN - 4.0, HEIGHT - MARGIN, 10f64.powf(y0))?;
    writeln!(w, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3e}</text>"#, MARGIN - 4.0, MARGIN + 10.0, 10f64.powf(y1))?;
    let poly = |pts: &[(f64, f64)]| pts.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect::<Vec<_>>().join(" ");
    let mut legend_y = MARGIN + 16.0;
    for (i, (name, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        writeln!(w, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, poly(pts))?;
        for &(x, y) in pts.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0) {
            writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y))?;
        }
        writeln!(w, r#"<text x="{}" y="{legend_y}" fill="{c}">{name}</text>"#, WIDTH - MARGIN - 150.0)?;
        legend_y += 16.0;
    }
    if let Some((name, pts)) = reference {
        writeln!(w, r#"<polyline points="{}" fill="none" stroke="gray" stroke-dasharray="6,4"/>"#, poly(&pts))?;
        writeln!(w, r#"<text x="{}" y="{legend_y}" fill="gray">{name}</text>"#, WIDTH - MARGIN - 150.0)?;
    }
    writeln!(w, "</svg>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let mus = [0.5, 0.25, 0.125, 0.0625];
        let exact: Vec<(f64, f64)> = mus.iter().map(|&m| (m, m)).collect();
        let f = fit_rate(&exact).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.max_deviation < 1e-12);
        let sq: Vec<(f64, f64)> = mus.iter().map(|&m| (m, m * m)).collect();
        assert!((fit_rate(&sq).unwrap().slope - 2.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = mus.iter().map(|&m| (m, 0.3)).collect();
        assert!(fit_rate(&flat).unwrap().slope.abs() < 1e-12);
        assert!(matches!(fit_rate(&exact[..2]), Err(StudyError::TooFewRows(2))));
    }

    #[test]
    fn hausdorff_of_point_sets() {
        assert_eq!(truncated_hausdorff(&[1.0, 0.5], &[1.0, 0.4]), 0.09999999999999998);
        assert_eq!(truncated_hausdorff(&[1.0], &[1.0]), 0.0);
    }

    #[test]
    fn sobolev_norms_of_modes() {
        let l = 1.0;
        assert!((sobolev_norm(&TestFunction::Constant(1.0), l, 1.5) - 1.0).abs() < 1e-12);
        let k = 3.0 * PI;
        let expect = ((1.0 + k * k).powf(0.5) * 0.5).sqrt();
        assert!((sobolev_norm(&TestFunction::Cosine(3), l, 0.5) - expect).abs() < 1e-10);
    }

    #[test]
    fn symmetric_pairs_cancel() {
        let holes: Vec<(f64, f64)> = (0..8).map(|k| ((k as f64 + 0.5) / 8.0, 1.0 / 16.0)).collect();
        let caps = vec![0.5; 8];
        let g = TestFunction::Polynomial(vec![0.0, 1.0]);
        let h = TestFunction::Polynomial(vec![1.0, 0.0, 2.0]);
        let lhs = interface_defect(&holes, &caps, &GammaProfile::Constant(1.0), &g, &h, 1.0);
        assert!(lhs < 1e-14, "{lhs}");
    }
}
