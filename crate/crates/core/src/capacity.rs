//! Capacities of slits and flat disks relative to a guard ball, the capacity
//! potentials, and calibration of slit widths to a prescribed strength.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::CapacityError;
use crate::fem::{assemble_stiffness, assemble_stiffness_weighted, solve_dirichlet};
use crate::mesh::rings::{connect_rings, core_point, core_rings, elliptic_coords, Ring};
use crate::mesh::{TriMesh, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Slit2d,
    AnnulusOracle,
    FlatDisk3d,
}

impl Shape {
    pub fn name(&self) -> &'static str {
        match self {
            Shape::Slit2d => "slit2d",
            Shape::AnnulusOracle => "annulus_oracle",
            Shape::FlatDisk3d => "flat_disk3d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityProblem {
    pub n: usize,
    pub d: f64,
    pub rho: f64,
    pub shape: Shape,
}

impl CapacityProblem {
    /// The annulus oracle admits any `0 < d < rho`; the other shapes need `d ≤ rho/8`.
    pub fn new(n: usize, d: f64, rho: f64, shape: Shape) -> Result<Self, CapacityError> {
        if !(d > 0.0 && rho.is_finite() && d < rho) {
            return Err(CapacityError::BadRadii { d, rho });
        }
        let dim_ok = match shape {
            Shape::Slit2d => n == 2,
            Shape::AnnulusOracle => n == 2,
            Shape::FlatDisk3d => n == 3,
        };
        if !dim_ok {
            return Err(CapacityError::Shape(shape.name()));
        }
        if shape != Shape::AnnulusOracle && d > rho / 8.0 {
            return Err(CapacityError::SizeRatio(d / rho));
        }
        Ok(Self { n, d, rho, shape })
    }
}

/// Capacity of the ball of radius `d` relative to the concentric ball of radius `rho`.
pub fn radial_capacity(n: usize, d: f64, rho: f64) -> Result<f64, CapacityError> {
    if !(d > 0.0 && d < rho) {
        return Err(CapacityError::BadRadii { d, rho });
    }
    match n {
        2 => Ok(2.0 * PI / (rho / d).ln()),
        3 => Ok(4.0 * PI / (1.0 / d - 1.0 / rho)),
        _ => Err(CapacityError::Shape("radial capacity is implemented for n = 2, 3")),
    }
}

/// Radial profiles built from the fundamental solution `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub n: usize,
    pub d: f64,
    pub d_tilde: f64,
    pub rho: f64,
}

impl CutoffProfile {
    pub fn new(n: usize, d: f64, rho: f64) -> Self {
        let d_tilde = if n >= 3 { 2.0 * d } else { (rho * d).sqrt() };
        Self { n, d, d_tilde, rho }
    }

    pub fn g(&self, t: f64) -> f64 {
        if self.n == 2 {
            -t.ln()
        } else {
            t.powi(2 - self.n as i32)
        }
    }

    fn ratio(&self, r: f64, outer: f64) -> f64 {
        if r <= self.d {
            return 1.0;
        }
        if r >= outer {
            return 0.0;
        }
        if self.n == 2 {
            (outer / r).ln() / (outer / self.d).ln()
        } else {
            (self.g(r) - self.g(outer)) / (self.g(self.d) - self.g(outer))
        }
    }

    /// 1 on the hole ball, 0 beyond `d_tilde`, harmonic in between.
    pub fn phi(&self, r: f64) -> f64 {
        self.ratio(r, self.d_tilde)
    }

    /// Radial potential vanishing on the guard sphere.
    pub fn psi_tilde(&self, r: f64) -> f64 {
        self.ratio(r, self.rho)
    }

    /// `|d psi_tilde / dr|` at `r ≥ d`.
    pub fn psi_tilde_slope(&self, r: f64) -> f64 {
        let r = r.max(self.d);
        if self.n == 2 {
            1.0 / (r * (self.rho / self.d).ln())
        } else {
            let m = self.n as i32 - 2;
            m as f64 * r.powi(-m - 1) / (self.g(self.d) - self.g(self.rho))
        }
    }

    /// Smooth cutoff: 1 up to `rho/4`, 0 from `rho/2`.
    pub fn psi(&self, r: f64) -> f64 {
        let t = 4.0 * r / self.rho;
        if t <= 1.0 {
            return 1.0;
        }
        if t >= 2.0 {
            return 0.0;
        }
        let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
        f(2.0 - t) / (f(2.0 - t) + f(t - 1.0))
    }

    /// Dirichlet energy of `phi` in closed form.
    pub fn phi_energy(&self) -> f64 {
        if self.n == 2 {
            2.0 * PI / (self.d_tilde / self.d).ln()
        } else {
            let area = if self.n == 3 { 4.0 * PI } else { unimplemented!("n > 3") };
            (self.n - 2) as f64 * area / (self.g(self.d) - self.g(self.d_tilde))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiskKind {
    Elliptic,
    Polar,
}

/// Mesh of the guard disk (or meridian half disk) with Dirichlet data.
#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub mesh: TriMesh,
    pub d: f64,
    pub rho: f64,
    pub kind: DiskKind,
    pub axisymmetric: bool,
    /// Angular cells of the outermost core ring on the upper half.
    pub n_half: usize,
    pub r_core: f64,
    pub fixed: Vec<Option<f64>>,
    /// Image of every vertex under `y -> -y`.
    pub mirror: Vec<usize>,
    ring_param: Vec<f64>,
    gaps: Vec<Vec<usize>>,
}

struct DiskBuilder {
    vertices: Vec<Vertex>,
    fixed: Vec<Option<f64>>,
    tris: Vec<[usize; 3]>,
    gaps: Vec<Vec<usize>>,
}

impl DiskBuilder {
    fn push(&mut self, p: [f64; 2], fixed: Option<f64>) -> usize {
        self.vertices.push(Vertex::anchored(0, [0.0, 0.0], p));
        self.fixed.push(fixed);
        self.vertices.len() - 1
    }

    fn join(&mut self, inner: &[usize], outer: &[usize], split: usize) {
        let start = self.tris.len();
        connect_rings(&mut self.tris, inner, outer, split);
        self.gaps.push((start..self.tris.len()).collect());
    }

    fn finish(self, d: f64, rho: f64, kind: DiskKind, axisymmetric: bool, n_half: usize, r_core: f64, ring_param: Vec<f64>) -> DiskMesh {
        let DiskBuilder { mut vertices, mut fixed, tris, gaps } = self;
        let n = vertices.len();
        let mut mirror: Vec<usize> = (0..n).collect();
        for v in 0..n {
            let src = vertices[v];
            if src.local[1] > 0.0 {
                mirror[v] = vertices.len();
                vertices.push(Vertex::anchored(0, [0.0, 0.0], [src.local[0], -src.local[1]]));
                fixed.push(fixed[v]);
            }
        }
        for v in 0..n {
            if mirror[v] != v {
                mirror.push(v);
            }
        }
        let mut triangles = tris.clone();
        triangles.extend(tris.iter().map(|t| [mirror[t[0]], mirror[t[2]], mirror[t[1]]]));
        DiskMesh { mesh: TriMesh { vertices, triangles }, d, rho, kind, axisymmetric, n_half, r_core, fixed, mirror, ring_param, gaps }
    }
}

fn elliptic_disk(d: f64, rho: f64, n_half: usize, r_core: f64, meridian: bool) -> Result<DiskMesh, CapacityError> {
    if n_half < 8 || n_half % 4 != 0 {
        return Err(CapacityError::TooCoarse(format!("angular count {n_half} must be a multiple of 4, at least 8")));
    }
    if !(r_core >= 4.0 * d && r_core < rho) {
        return Err(CapacityError::TooCoarse(format!("core radius {r_core} must lie in [4 d, rho)")));
    }
    let mut rings = core_rings(d, r_core, n_half);
    let dt = PI / n_half as f64;
    loop {
        let s = rings.last().expect("core rings").s + dt;
        if d * s.cosh() >= rho * (1.0 - 0.5 * dt) {
            break;
        }
        rings.push(Ring { s, n_half });
    }
    let span = |nh: usize| if meridian { nh / 2 } else { nh };
    let split = |nh: usize| if meridian { usize::MAX } else { nh / 2 };
    let mut bld = DiskBuilder { vertices: Vec::new(), fixed: Vec::new(), tris: Vec::new(), gaps: Vec::new() };
    let mut prev: Vec<usize> = Vec::new();
    for (r, ring) in rings.iter().enumerate() {
        let fixed = if r == 0 { Some(1.0) } else { None };
        let ids: Vec<usize> = (0..=span(ring.n_half)).map(|j| bld.push(core_point(d, ring.s, j, ring.n_half), fixed)).collect();
        if r > 0 {
            bld.join(&prev, &ids, split(rings[r - 1].n_half));
        }
        prev = ids;
    }
    let last = rings.last().expect("core rings").s;
    let circle: Vec<usize> = (0..=span(n_half))
        .map(|j| {
            let p = if j == 0 {
                [rho, 0.0]
            } else if j == n_half {
                [-rho, 0.0]
            } else if 2 * j == n_half {
                [0.0, rho]
            } else {
                let e = core_point(d, last, j, n_half);
                let phi = e[1].atan2(e[0]);
                [rho * phi.cos(), rho * phi.sin()]
            };
            bld.push(p, Some(0.0))
        })
        .collect();
    bld.join(&prev, &circle, split(n_half));
    let mut param: Vec<f64> = rings.iter().map(|r| r.s).collect();
    param.push((rho / d).acosh());
    Ok(bld.finish(d, rho, DiskKind::Elliptic, meridian, n_half, r_core, param))
}

/// Guard disk around a slit, with the core rings of a main-mesh patch.
pub fn slit_disk_mesh(d: f64, rho: f64, n_half: usize, r_core: f64) -> Result<DiskMesh, CapacityError> {
    elliptic_disk(d, rho, n_half, r_core, false)
}

/// Meridian half disk `R ≥ 0` of the axisymmetric flat-disk problem.
pub fn meridian_disk_mesh(d: f64, rho: f64, n_half: usize, r_core: f64) -> Result<DiskMesh, CapacityError> {
    elliptic_disk(d, rho, n_half, r_core, true)
}

/// Polar mesh of the annulus `d < r < rho` with `n_ang` nodes per circle.
pub fn annulus_mesh(d: f64, rho: f64, n_ang: usize) -> Result<DiskMesh, CapacityError> {
    if n_ang < 16 || n_ang % 4 != 0 {
        return Err(CapacityError::TooCoarse(format!("angular count {n_ang} must be a multiple of 4, at least 16")));
    }
    let da = 2.0 * PI / n_ang as f64;
    // inner polygon circumscribes the hole circle
    let r0 = d / (0.5 * da).cos();
    if r0 >= rho {
        return Err(CapacityError::BadRadii { d, rho });
    }
    let m = ((rho / r0).ln() / da).ceil().max(2.0) as usize;
    let radii: Vec<f64> = (0..=m).map(|i| if i == m { rho } else { r0 * (rho / r0).powf(i as f64 / m as f64) }).collect();
    let quarter = n_ang / 4;
    let point = |r: f64, j: usize| match j {
        0 => [r, 0.0],
        _ if j == quarter => [0.0, r],
        _ if j == 2 * quarter => [-r, 0.0],
        _ if j == 3 * quarter => [0.0, -r],
        _ => {
            let a = j as f64 * da;
            [r * a.cos(), r * a.sin()]
        }
    };
    let mut vertices = Vec::new();
    let mut fixed = Vec::new();
    for (i, &r) in radii.iter().enumerate() {
        for j in 0..n_ang {
            vertices.push(Vertex::anchored(0, [0.0, 0.0], point(r, j)));
            fixed.push(if i == 0 { Some(1.0) } else if i == m { Some(0.0) } else { None });
        }
    }
    let id = |i: usize, j: usize| i * n_ang + j % n_ang;
    let mut triangles = Vec::new();
    let mut gaps = Vec::new();
    for i in 0..m {
        let start = triangles.len();
        for j in 0..n_ang {
            let (a, b, c, e) = (id(i, j), id(i, j + 1), id(i + 1, j), id(i + 1, j + 1));
            if (j / quarter) % 2 == 0 {
                triangles.push([a, c, e]);
                triangles.push([a, e, b]);
            } else {
                triangles.push([a, c, b]);
                triangles.push([c, e, b]);
            }
        }
        // only upper-half triangles are searched when locating points
        gaps.push((start..triangles.len()).filter(|&t| (t - start) / 2 < 2 * quarter).collect());
    }
    let mirror = (0..vertices.len()).map(|v| id(v / n_ang, n_ang - v % n_ang)).collect();
    Ok(DiskMesh {
        mesh: TriMesh { vertices, triangles },
        d,
        rho,
        kind: DiskKind::Polar,
        axisymmetric: false,
        n_half: n_ang / 2,
        r_core: r0,
        fixed,
        mirror,
        ring_param: radii,
        gaps,
    })
}

/// Capacity potential on a disk mesh.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub disk: DiskMesh,
    pub values: Vec<f64>,
    pub energy: f64,
    /// Relative residual of the linear solve.
    pub residual: f64,
}

pub fn solve_potential(disk: DiskMesh) -> Result<PotentialField, CapacityError> {
    let k = if disk.axisymmetric {
        assemble_stiffness_weighted(&disk.mesh, &|c| 2.0 * PI * c[0].max(0.0))?
    } else {
        assemble_stiffness(&disk.mesh)?
    };
    let (values, residual) = solve_dirichlet(&k, &disk.fixed)?;
    let energy = k.quad_form(&values);
    Ok(PotentialField { disk, values, energy, residual })
}

impl PotentialField {
    /// Value at a point given relative to the hole center; zero outside the guard ball.
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let disk = &self.disk;
        let q = [p[0], p[1].abs()];
        if q[0].hypot(q[1]) >= disk.rho {
            return 0.0;
        }
        let param = match disk.kind {
            DiskKind::Elliptic => elliptic_coords(disk.d, q).0,
            DiskKind::Polar => q[0].hypot(q[1]),
        };
        if disk.kind == DiskKind::Polar && param <= disk.ring_param[0] {
            return 1.0;
        }
        let g = disk.ring_param.partition_point(|&r| r <= param).saturating_sub(1).min(disk.gaps.len() - 1);
        let lo = g.saturating_sub(1);
        let hi = (g + 1).min(disk.gaps.len() - 1);
        let scale = 1.0 / disk.d;
        let x = [q[0] * scale, q[1] * scale];
        let mut best = (f64::NEG_INFINITY, 0usize, [0.0; 3]);
        for gap in &disk.gaps[lo..=hi] {
            for &t in gap {
                let tri = disk.mesh.triangles[t];
                let v = tri.map(|i| {
                    let l = disk.mesh.vertices[i].local;
                    [l[0] * scale, l[1] * scale]
                });
                let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
                let l1 = ((x[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (x[1] - v[0][1])) / det;
                let l2 = ((v[1][0] - v[0][0]) * (x[1] - v[0][1]) - (x[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
                let lam = [1.0 - l1 - l2, l1, l2];
                let worst = lam.iter().copied().fold(f64::INFINITY, f64::min);
                if worst > best.0 {
                    best = (worst, t, lam);
                }
            }
        }
        if best.0 < -1e-6 {
            return 0.0;
        }
        let tri = disk.mesh.triangles[best.1];
        let lam = best.2.map(|l| l.max(0.0));
        let sum: f64 = lam.iter().sum();
        (0..3).map(|i| lam[i] * self.values[tri[i]]).sum::<f64>() / sum
    }
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub problem: CapacityProblem,
    pub h: f64,
    pub capacity: f64,
    pub phi_energy: f64,
    pub radial_oracle: Option<f64>,
    pub field: PotentialField,
}

pub const CAPACITY_CSV_HEADER: &str = "shape,n,d,rho,h,capacity,energy_of_phi,radial_oracle";

impl CapacityResult {
    pub fn csv_row(&self) -> String {
        let p = &self.problem;
        let oracle = self.radial_oracle.map_or(String::new(), |v| format!("{v:.12e}"));
        format!("{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}", p.shape.name(), p.n, p.d, p.rho, self.h, self.capacity, self.phi_energy, oracle)
    }
}

pub fn write_capacity_csv<W: Write>(rows: &[CapacityResult], mut w: W) -> io::Result<()> {
    writeln!(w, "{CAPACITY_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Angular cells per upper half matching a patch of guard radius `rho` on a grid of spacing `h`.
pub fn core_cells(rho: f64, h: f64) -> usize {
    4 * ((rho / h).round() as usize).max(2)
}

/// Solves the capacity problem on a mesh of nominal size `h` near the guard sphere.
pub fn capacity_fem(problem: CapacityProblem, h: f64) -> Result<CapacityResult, CapacityError> {
    if !(h > 0.0 && h <= problem.rho / 2.0) {
        return Err(CapacityError::TooCoarse(format!("h = {h} must lie in (0, rho/2]")));
    }
    let disk = match problem.shape {
        Shape::Slit2d => slit_disk_mesh(problem.d, problem.rho, core_cells(problem.rho, h), 0.5 * problem.rho)?,
        Shape::FlatDisk3d => meridian_disk_mesh(problem.d, problem.rho, core_cells(problem.rho, h), 0.5 * problem.rho)?,
        Shape::AnnulusOracle => {
            let n = 8 * ((2.0 * PI * problem.rho / h / 8.0).ceil() as usize).max(2);
            annulus_mesh(problem.d, problem.rho, n)?
        }
    };
    finish(problem, h, disk)
}

/// Slit capacity on a disk mesh sharing the core of a main-mesh patch.
pub fn capacity_with_core(problem: CapacityProblem, n_half: usize, r_core: f64) -> Result<CapacityResult, CapacityError> {
    let disk = match problem.shape {
        Shape::Slit2d => slit_disk_mesh(problem.d, problem.rho, n_half, r_core)?,
        Shape::FlatDisk3d => meridian_disk_mesh(problem.d, problem.rho, n_half, r_core)?,
        Shape::AnnulusOracle => return Err(CapacityError::Shape("annulus_oracle")),
    };
    let h = 4.0 * problem.rho / n_half as f64;
    finish(problem, h, disk)
}

fn finish(problem: CapacityProblem, h: f64, disk: DiskMesh) -> Result<CapacityResult, CapacityError> {
    let field = solve_potential(disk)?;
    let profile = CutoffProfile::new(problem.n, problem.d, problem.rho);
    let radial_oracle = match problem.shape {
        Shape::AnnulusOracle => Some(radial_capacity(problem.n, problem.d, problem.rho)?),
        _ => None,
    };
    Ok(CapacityResult { problem, h, capacity: field.energy, phi_energy: profile.phi_energy(), radial_oracle, field })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialReport {
    pub min_value: f64,
    pub max_value: f64,
    /// Largest `U - psi_tilde - tol` over nodes outside the hole ball.
    pub max_excess: f64,
    pub worst_node: usize,
    /// Nodes off the hole where `U ≥ psi_tilde`.
    pub saturated: usize,
    /// Largest `U - psi_tilde` over nodes strictly between the hole ball and the guard sphere.
    pub max_gap: f64,
    pub symmetry_defect: f64,
    pub capacity: f64,
    pub phi_energy: f64,
}

impl PotentialReport {
    pub fn bound_ok(&self) -> bool {
        self.max_excess <= 0.0 && self.min_value >= -1e-9 && self.max_value <= 1.0 + 1e-9
    }

    pub fn passed(&self, symmetry_tol: f64) -> bool {
        self.bound_ok() && self.symmetry_defect <= symmetry_tol && self.capacity <= self.phi_energy
    }
}

/// Checks the pointwise bounds, mirror symmetry, and the test-function bound.
pub fn potential_checks(field: &PotentialField, profile: &CutoffProfile) -> PotentialReport {
    let m = &field.disk.mesh;
    let n = m.n_vertices();
    let mut hloc = vec![0.0f64; n];
    for tri in &m.triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = m.edge(a, b);
            let l = e[0].hypot(e[1]);
            hloc[a] = hloc[a].max(l);
            hloc[b] = hloc[b].max(l);
        }
    }
    let u = &field.values;
    let mut rep = PotentialReport {
        min_value: f64::INFINITY,
        max_value: f64::NEG_INFINITY,
        max_excess: f64::NEG_INFINITY,
        worst_node: 0,
        saturated: 0,
        max_gap: f64::NEG_INFINITY,
        symmetry_defect: 0.0,
        capacity: field.energy,
        phi_energy: profile.phi_energy(),
    };
    for v in 0..n {
        rep.min_value = rep.min_value.min(u[v]);
        rep.max_value = rep.max_value.max(u[v]);
        rep.symmetry_defect = rep.symmetry_defect.max((u[v] - u[field.disk.mirror[v]]).abs());
        let p = m.vertices[v].local;
        let r = p[0].hypot(p[1]);
        if r <= profile.d {
            continue;
        }
        let bound = profile.psi_tilde(r);
        let tol = 2.0 * hloc[v] * profile.psi_tilde_slope(r - hloc[v]);
        let excess = u[v] - bound - tol;
        if excess > rep.max_excess {
            rep.max_excess = excess;
            rep.worst_node = v;
        }
        if field.disk.fixed[v].is_none() {
            rep.max_gap = rep.max_gap.max(u[v] - bound);
            if u[v] >= bound {
                rep.saturated += 1;
            }
        }
    }
    rep
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub d: f64,
    pub capacity: f64,
    pub target: f64,
    pub gamma: f64,
    pub solves: usize,
    pub field: PotentialField,
}

/// Relative capacity mismatch the calibration iterates down to.
pub const CALIBRATION_TOL: f64 = 1e-6;

/// Half-width `d` with `capacity / (4 eps) = gamma_target` on the guard disk.
pub fn calibrate_hole_size(gamma_target: f64, eps: f64, rho: f64, h: f64) -> Result<Calibration, CapacityError> {
    calibrate_with_core(gamma_target, eps, rho, core_cells(rho, h), 0.5 * rho)
}

/// Calibration on the disk mesh with the given core structure.
pub fn calibrate_with_core(gamma_target: f64, eps: f64, rho: f64, n_half: usize, r_core: f64) -> Result<Calibration, CapacityError> {
    if !(gamma_target > 0.0 && eps > 0.0) {
        return Err(CapacityError::Extrapolation(format!("need positive target and eps, got {gamma_target}, {eps}")));
    }
    let target = 4.0 * eps * gamma_target;
    let mut solves = 0;
    let mut cap_at = |ell: f64| -> Result<(f64, PotentialField), CapacityError> {
        solves += 1;
        let d = ell.exp().min(rho / 8.0);
        if !(d > 1e-300) {
            return Err(CapacityError::TooCoarse(format!("half-width e^{ell:.1} below floating-point range")));
        }
        let p = CapacityProblem::new(2, d, rho, Shape::Slit2d)?;
        let r = capacity_with_core(p, n_half, r_core)?;
        Ok((r.capacity, r.field))
    };
    let ell_max = (rho / 8.0f64).ln();
    let (cap_max, field_max) = cap_at(ell_max)?;
    if cap_max < target * (1.0 - CALIBRATION_TOL) {
        return Err(CapacityError::Unreachable { target: gamma_target, max: cap_max / (4.0 * eps) });
    }
    let g = |cap: f64| 1.0 / cap - 1.0 / target;
    // 1/cap is close to affine in ln d, so the radial law gives a good start
    let guess = ((2.0 * rho).ln() - 2.0 * PI / target).min(ell_max - 0.1);
    let mut hi = (ell_max, g(cap_max), cap_max, field_max);
    let mut lo = {
        let mut ell = guess - 0.5;
        loop {
            let (c, f) = cap_at(ell)?;
            if g(c) > 0.0 {
                break (ell, g(c), c, f);
            }
            hi = (ell, g(c), c, f);
            ell -= 2.0 * (ell_max - ell).max(1.0);
        }
    };
    if (hi.2 / target - 1.0).abs() <= CALIBRATION_TOL {
        return Ok(Calibration { d: hi.0.exp().min(rho / 8.0), capacity: hi.2, target, gamma: hi.2 / (4.0 * eps), solves, field: hi.3 });
    }
    // Illinois regula falsi on g(ln d); g(lo) > 0 > g(hi)
    let mut side = 0i8;
    for _ in 0..80 {
        let ell = (lo.0 * hi.1 - hi.0 * lo.1) / (hi.1 - lo.1);
        let (c, f) = cap_at(ell)?;
        let gv = g(c);
        if (c / target - 1.0).abs() <= CALIBRATION_TOL || (hi.0 - lo.0).abs() < 1e-13 * ell.abs().max(1.0) {
            return Ok(Calibration { d: ell.exp().min(rho / 8.0), capacity: c, target, gamma: c / (4.0 * eps), solves, field: f });
        }
        if gv > 0.0 {
            lo = (ell, gv, c, f);
            if side == 1 {
                hi.1 *= 0.5;
            }
            side = 1;
        } else {
            hi = (ell, gv, c, f);
            if side == -1 {
                lo.1 *= 0.5;
            }
            side = -1;
        }
    }
    Err(CapacityError::Extrapolation(format!("calibration for gamma = {gamma_target} did not settle")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaLevel {
    pub rho: f64,
    pub n_half: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// Estimates from the two guard radii after extrapolation in the mesh.
    pub per_radius: Vec<(f64, f64)>,
    pub levels: Vec<AlphaLevel>,
    pub spread: f64,
}

/// Newtonian capacity of the unit flat disk, by axisymmetric solves
/// extrapolated in the mesh (Richardson, second order) and in the guard
/// radius (series correction `1/cap_inf = 1/cap_rho + 1/(4 pi rho)`).
pub fn flat_disk_alpha(levels: usize) -> Result<AlphaEstimate, CapacityError> {
    if levels < 2 {
        return Err(CapacityError::Extrapolation("need at least two mesh levels".into()));
    }
    let mut all = Vec::new();
    let mut per_radius = Vec::new();
    for &rho in &[16.0, 32.0] {
        let mut caps = Vec::new();
        for l in 0..levels {
            let n_half = 16 << l;
            let p = CapacityProblem::new(3, 1.0, rho, Shape::FlatDisk3d)?;
            let c = capacity_with_core(p, n_half, 0.5 * rho)?.capacity;
            all.push(AlphaLevel { rho, n_half, capacity: c });
            caps.push(c);
        }
        let (coarse, fine) = (caps[levels - 2], caps[levels - 1]);
        let extrapolated = (4.0 * fine - coarse) / 3.0;
        per_radius.push((rho, 1.0 / (1.0 / extrapolated + 1.0 / (4.0 * PI * rho))));
    }
    let (a1, a2) = (per_radius[0].1, per_radius[1].1);
    let spread = (a2 - a1).abs() / a2;
    if spread > 1e-2 {
        return Err(CapacityError::Extrapolation(format!("guard-radius extrapolation spread {spread:.3e}")));
    }
    Ok(AlphaEstimate { alpha: a2, per_radius, levels: all, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_examples() {
        assert!((radial_capacity(2, 1.0 / std::f64::consts::E, 1.0).unwrap() - 2.0 * PI).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((radial_capacity(2, 1.0 / e2, 1.0).unwrap() - PI).abs() < 1e-12);
        assert!((radial_capacity(3, 1.0, 1e12).unwrap() - 4.0 * PI).abs() < 1e-9);
        assert!(radial_capacity(2, 1.0, 1.0).is_err());
    }

    #[test]
    fn profile_shapes() {
        let p = CutoffProfile::new(2, 1e-4, 0.1);
        assert_eq!(p.phi(5e-5), 1.0);
        assert_eq!(p.phi(p.d_tilde), 0.0);
        assert_eq!(p.psi(0.025), 1.0);
        assert_eq!(p.psi(0.05), 0.0);
        assert!(p.psi(0.03) > p.psi(0.04));
        assert!((p.psi_tilde(1e-4) - 1.0).abs() < 1e-15);
        assert_eq!(p.psi_tilde(0.1), 0.0);
    }

    #[test]
    fn annulus_matches_radial_law() {
        let rho = 1.0;
        let d = rho / std::f64::consts::E;
        let p = CapacityProblem::new(2, d, rho, Shape::AnnulusOracle).unwrap();
        let r = capacity_fem(p, rho / 64.0).unwrap();
        let exact = 2.0 * PI;
        assert!(r.capacity >= exact);
        assert!((r.capacity - exact) / exact < 0.02);
    }

    #[test]
    fn potential_location_reproduces_nodes() {
        let p = CapacityProblem::new(2, 1e-3, 0.1, Shape::Slit2d).unwrap();
        let r = capacity_fem(p, 0.025).unwrap();
        let f = &r.field;
        for (v, vert) in f.disk.mesh.vertices.iter().enumerate().step_by(7) {
            let e = f.eval(vert.local);
            assert!((e - f.values[v]).abs() < 1e-9, "node {v}: {e} vs {}", f.values[v]);
        }
    }
}
