use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use sieve_core::capacity::{capacity_fem, potential_checks, write_capacity_csv, CapacityProblem, CutoffProfile, Shape};
use sieve_core::corrector::{build_corrector, hole_potentials, write_coefficients_csv};
use sieve_core::experiments::{
    assumption_main_check, build_instance, convergence_study, family_widths, instance_from_config, rectangle_eigen_oracle,
    solve_pair, spectral_study, write_assumption_csv, write_convergence_csv, write_loglog_svg, write_spectral_csv,
    AssumptionSpec, ConvergenceSpec, Instance, RateFit, SpectralSpec,
};
use sieve_core::fem::FeFunction;
use sieve_core::geometry::{rate_params, Domain2D, KappaRecipe};
use sieve_core::mesh::{MeshParams, VertexSide};

use crate::config::{parse_test_function, DRule, Loaded, Mode};
use crate::{Command, Run};

type CmdResult = Result<bool, String>;

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, String> {
    let p = out.join(name);
    File::create(&p).map(BufWriter::new).map_err(|e| format!("{}: {e}", p.display()))
}

fn io<T>(r: std::io::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn prepare(out: &Path) -> Result<(), String> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))
}

pub fn dispatch(cmd: Command, cfg: &Loaded, run: &Run) -> CmdResult {
    prepare(&run.out)?;
    io(fs::write(run.out.join("effective_config.toml"), &cfg.effective))?;
    if cfg.file.sieve.mode == Mode::Regular && cmd != Command::Solve && cmd != Command::Capacity {
        return Err("regular (n = 3) configurations are analytic only; use solve".into());
    }
    match cmd {
        Command::Capacity => capacity(cfg, run),
        Command::Calibrate => calibrate(cfg, run),
        Command::Solve => solve(cfg, run),
        Command::Convergence => convergence(cfg, run),
        Command::Spectral => spectral(cfg, run),
        Command::Assumption => assumption(cfg, run),
        Command::Selftest => selftest(run),
    }
}

fn capacity(cfg: &Loaded, run: &Run) -> CmdResult {
    let c = &cfg.file.capacity;
    let (n, shape) = cfg.file.shape().map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for &h in &c.h {
        let p = CapacityProblem::new(n, c.d, c.rho, shape).map_err(|e| e.to_string())?;
        rows.push(capacity_fem(p, h).map_err(|e| e.to_string())?);
    }
    io(write_capacity_csv(&rows, create(&run.out, "capacity.csv")?))?;
    let mut ok = true;
    let mut checks = create(&run.out, "checks.csv")?;
    if shape == Shape::AnnulusOracle {
        io(writeln!(checks, "h,capacity,radial_oracle,rel_error"))?;
        let mut last = f64::INFINITY;
        for r in &rows {
            let exact = r.radial_oracle.expect("annulus rows carry the radial law");
            let e = (r.capacity - exact).abs() / exact;
            io(writeln!(checks, "{:.12e},{:.12e},{:.12e},{:.6e}", r.h, r.capacity, exact, e))?;
            println!("h = {:.4e}: capacity {:.10e}, radial law {:.10e}, rel error {:.3e}", r.h, r.capacity, exact, e);
            ok &= e <= 0.02 && e < last;
            last = e;
        }
    } else {
        io(writeln!(checks, "h,min,max,max_excess,saturated,symmetry_defect,capacity,energy_of_phi,passed"))?;
        let profile = CutoffProfile::new(n, c.d, c.rho);
        for r in &rows {
            let rep = potential_checks(&r.field, &profile);
            let pass = rep.passed(1e-12);
            io(writeln!(
                checks,
                "{:.12e},{:.6e},{:.6e},{:.6e},{},{:.3e},{:.12e},{:.12e},{pass}",
                r.h, rep.min_value, rep.max_value, rep.max_excess, rep.saturated, rep.symmetry_defect, rep.capacity, rep.phi_energy
            ))?;
            println!("h = {:.4e}: capacity {:.10e} (bound {:.10e}), checks {}", r.h, r.capacity, r.phi_energy, if pass { "ok" } else { "FAILED" });
            ok &= pass;
        }
    }
    io(checks.flush())?;
    if run.svg {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.capacity)).collect();
        io(write_loglog_svg("capacity", "h", &[("capacity", pts)], None, create(&run.out, "capacity.svg")?))?;
    }
    Ok(ok)
}

fn calibrate(cfg: &Loaded, run: &Run) -> CmdResult {
    let f = &cfg.file;
    let family = f.family().map_err(|e| e.to_string())?;
    let domain = f.domain().map_err(|e| e.to_string())?;
    let mut w = create(&run.out, "calibration.csv")?;
    io(writeln!(w, "eps,rho,d,capacity,gamma"))?;
    for &e in &f.study.eps {
        let (d, cap) = family_widths(&domain, e, family, f.budget().params(e)).map_err(|e| e.to_string())?;
        let gamma = cap / (4.0 * e);
        io(writeln!(w, "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}", e, 0.5 * e, d, cap, gamma))?;
        println!("eps = {e:.6}: d = {d:.6e}, cap = {cap:.6e}, gamma = {gamma:.6}");
    }
    io(w.flush())?;
    Ok(true)
}

fn instance(cfg: &Loaded) -> Result<Instance, String> {
    let f = &cfg.file;
    let domain = f.domain().map_err(|e| e.to_string())?;
    match f.sieve.mode {
        Mode::Explicit => {
            let config = f.build_sieve().map_err(|e| e.to_string())?;
            let h = f.mesh.h.unwrap_or(config.eps / f.mesh.cells_per_eps as f64);
            instance_from_config(config, MeshParams::graded(h, f.mesh.h_max)).map_err(|e| e.to_string())
        }
        Mode::Periodic => {
            let eps = f.sieve.eps.ok_or("sieve.eps is required for solve")?;
            let params = match f.mesh.h {
                Some(h) => MeshParams::graded(h, f.mesh.h_max),
                None => f.budget().params(eps),
            };
            if f.sieve.d_rule == Some(DRule::Fixed) {
                let config = f.sieve_config(eps).map_err(|e| e.to_string())?;
                instance_from_config(config, params).map_err(|e| e.to_string())
            } else {
                let family = f.family().map_err(|e| e.to_string())?;
                build_instance(&domain, eps, family, params).map_err(|e| e.to_string())
            }
        }
        Mode::Regular => unreachable!("regular configurations are not meshed"),
    }
}

fn regular_rates(cfg: &Loaded, run: &Run) -> CmdResult {
    let config = cfg.file.build_sieve().map_err(|e| e.to_string())?;
    let rates = rate_params(&config, KappaRecipe::Regular);
    let mut w = create(&run.out, "holes.csv")?;
    io(writeln!(w, "k,x,z,d,rho,gamma_k,eta_k"))?;
    for (k, h) in config.holes.iter().enumerate() {
        io(writeln!(
            w,
            "{k},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            h.center[0], h.center[1], h.half_width, h.guard_radius, rates.gamma_k[k], rates.eta_k[k]
        ))?;
    }
    io(w.flush())?;
    let mut s = create(&run.out, "summary.txt")?;
    io(writeln!(s, "holes {}\nmu {:.12e}\nkappa {:.12e}\nsup_eta {:.12e}", config.holes.len(), rates.mu, rates.kappa, rates.sup_eta()))?;
    io(s.flush())?;
    println!("{} holes, mu = {:.6e}, kappa = {:.6e}", config.holes.len(), rates.mu, rates.kappa);
    Ok(true)
}

fn solve(cfg: &Loaded, run: &Run) -> CmdResult {
    if cfg.file.sieve.mode == Mode::Regular {
        return regular_rates(cfg, run);
    }
    let source = cfg.file.source().map_err(|e| e.to_string())?;
    let inst = instance(cfg)?;
    let pair = solve_pair(&inst, source).map_err(|e| e.to_string())?;
    let u = FeFunction::new(&pair.full, pair.u.clone());
    let pots = hole_potentials(&inst.mesh, &inst.config.holes).map_err(|e| e.to_string())?;
    let w = build_corrector(&u, &pots, inst.config.domain.width).map_err(|e| e.to_string())?;
    let mut sol = create(&run.out, "solution.csv")?;
    io(writeln!(sol, "node,x,y,side,u_eps,u,w"))?;
    for (i, v) in pair.full.mesh.vertices.iter().enumerate() {
        let side = match pair.full.vertex_sides[i] {
            VertexSide::Plus => "+",
            VertexSide::Minus => "-",
            VertexSide::Shared => "0",
        };
        io(writeln!(sol, "{i},{:.12e},{:.12e},{side},{:.12e},{:.12e},{:.12e}", v.pos[0], v.pos[1], pair.u_eps[i], pair.u[i], w.field.values[i]))?;
    }
    io(sol.flush())?;
    io(write_coefficients_csv(&w.coefficients, create(&run.out, "coefficients.csv")?))?;
    let fnorm = pair.f_norm();
    let (l2, h1c, h1u) = (pair.err_l2() / fnorm, pair.err_h1(Some(&w.field.values)) / fnorm, pair.err_h1(None) / fnorm);
    let mut s = create(&run.out, "summary.txt")?;
    io(writeln!(
        s,
        "holes {}\nvertices {}\nmu {:.12e}\nerr_l2 {l2:.12e}\nerr_h1_corrected {h1c:.12e}\nerr_h1_uncorrected {h1u:.12e}",
        inst.config.holes.len(),
        pair.full.n_vertices(),
        inst.rates.mu
    ))?;
    io(s.flush())?;
    println!("{} holes, {} vertices: |u_eps - u|/|f| = {l2:.4e}, H1 corrected {h1c:.4e}, uncorrected {h1u:.4e}", inst.config.holes.len(), pair.full.n_vertices());
    Ok(true)
}

fn describe_fit(name: &str, fit: &Option<RateFit>) -> String {
    match fit {
        Some(f) => format!("{name}: slope {:.4} (max log deviation {:.3e})", f.slope, f.max_deviation),
        None => format!("{name}: fewer than three resolved rows"),
    }
}

fn periodic_only(cfg: &Loaded) -> Result<Domain2D, String> {
    if cfg.file.sieve.mode != Mode::Periodic {
        return Err("sweeps need mode = periodic".into());
    }
    cfg.file.domain().map_err(|e| e.to_string())
}

fn convergence(cfg: &Loaded, run: &Run) -> CmdResult {
    let f = &cfg.file;
    let spec = ConvergenceSpec {
        domain: periodic_only(cfg)?,
        eps: f.study.eps.clone(),
        family: f.family().map_err(|e| e.to_string())?,
        source: f.source().map_err(|e| e.to_string())?,
        budget: f.budget(),
    };
    let report = convergence_study(&spec).map_err(|e| e.to_string())?;
    io(write_convergence_csv(&report, create(&run.out, "convergence.csv")?))?;
    for (i, r) in report.rows.iter().enumerate() {
        io(write_coefficients_csv(&r.coefficients, create(&run.out, &format!("coefficients_{i}.csv"))?))?;
    }
    let mut fits = create(&run.out, "fits.txt")?;
    for line in [
        describe_fit("err_l2", &report.slope_l2),
        describe_fit("err_h1_corrected", &report.slope_h1c),
        describe_fit("err_h1_uncorrected", &report.slope_h1u),
        format!("err_l2/mu spread: {:.4}", report.ratio_spread()),
    ] {
        println!("{line}");
        io(writeln!(fits, "{line}"))?;
    }
    io(fits.flush())?;
    for r in &report.rows {
        println!("eps = {:.6}: err_l2 {:.4e}, mu {:.4e}, half-h change {:.2}%, {:?}", r.eps, r.err_l2, r.mu, 100.0 * r.half_h_change, r.flag);
    }
    if run.svg {
        let pick = |g: fn(&sieve_core::experiments::ConvergenceRow) -> f64| report.rows.iter().map(|r| (r.mu, g(r))).collect::<Vec<_>>();
        let series = [("err_l2", pick(|r| r.err_l2)), ("err_h1 corrected", pick(|r| r.err_h1c)), ("err_h1 uncorrected", pick(|r| r.err_h1u))];
        io(write_loglog_svg("resolvent errors", "mu", &series, Some(("mu", pick(|r| r.mu))), create(&run.out, "convergence.svg")?))?;
    }
    Ok(!report.any_flagged())
}

fn spectral(cfg: &Loaded, run: &Run) -> CmdResult {
    let f = &cfg.file;
    let spec = SpectralSpec {
        domain: periodic_only(cfg)?,
        eps: f.study.eps.clone(),
        family: f.family().map_err(|e| e.to_string())?,
        budget: f.budget(),
        m: f.study.m,
    };
    let rows = spectral_study(&spec).map_err(|e| e.to_string())?;
    io(write_spectral_csv(&rows, create(&run.out, "spectral.csv")?))?;
    let mut w = create(&run.out, "eigenvalues.csv")?;
    io(writeln!(w, "eps,k,sieve,limit"))?;
    for r in &rows {
        for (k, (a, b)) in r.sieve.iter().zip(&r.limit).enumerate() {
            io(writeln!(w, "{:.12e},{k},{a:.12e},{b:.12e}", r.eps))?;
        }
        println!("eps = {:.6}: dH {:.4e}, mu {:.4e}{}", r.eps, r.d_h, r.mu, if r.converged { "" } else { ", NOT converged" });
    }
    io(w.flush())?;
    if run.svg {
        let pts = |g: fn(&sieve_core::experiments::SpectralRow) -> f64| rows.iter().map(|r| (r.eps, g(r))).collect::<Vec<_>>();
        io(write_loglog_svg("resolvent spectra", "eps", &[("dH", pts(|r| r.d_h))], Some(("mu", pts(|r| r.mu))), create(&run.out, "spectral.svg")?))?;
    }
    Ok(rows.iter().all(|r| r.converged))
}

fn assumption(cfg: &Loaded, run: &Run) -> CmdResult {
    let f = &cfg.file;
    let spec = AssumptionSpec {
        domain: periodic_only(cfg)?,
        eps: f.study.eps.clone(),
        family: f.family().map_err(|e| e.to_string())?,
        budget: f.budget(),
        g: parse_test_function(&f.assumption.g).map_err(|e| e.to_string())?,
        h: parse_test_function(&f.assumption.h).map_err(|e| e.to_string())?,
    };
    let rows = assumption_main_check(&spec).map_err(|e| e.to_string())?;
    io(write_assumption_csv(&rows, create(&run.out, "assumption.csv")?))?;
    for r in &rows {
        println!("eps = {:.6}: defect {:.4e}, ratio {:.4e}, kappa {:.4e}", r.eps, r.lhs, r.ratio, r.kappa);
    }
    if run.svg {
        let pts = |g: fn(&sieve_core::experiments::AssumptionRow) -> f64| rows.iter().map(|r| (r.eps, g(r))).collect::<Vec<_>>();
        io(write_loglog_svg("interface defect", "eps", &[("ratio", pts(|r| r.ratio))], Some(("kappa", pts(|r| r.kappa))), create(&run.out, "assumption.svg")?))?;
    }
    Ok(true)
}

/// Radial annulus law, mirror symmetry of a slit potential, and the
/// rectangle eigenvalues.
pub fn selftest(run: &Run) -> CmdResult {
    prepare(&run.out)?;
    let mut report = create(&run.out, "selftest.txt")?;
    let mut ok = true;

    let d = (-1.0f64).exp();
    let p = CapacityProblem::new(2, d, 1.0, Shape::AnnulusOracle).map_err(|e| e.to_string())?;
    let r = capacity_fem(p, 1.0 / 64.0).map_err(|e| e.to_string())?;
    let exact = r.radial_oracle.expect("annulus oracle");
    let e = (r.capacity - exact).abs() / exact;
    let pass = e <= 0.02;
    ok &= pass;
    let line = format!("annulus radial law: rel error {e:.3e} {}", if pass { "ok" } else { "FAILED" });
    println!("{line}");
    io(writeln!(report, "{line}"))?;

    let p = CapacityProblem::new(2, 1e-3, 0.1, Shape::Slit2d).map_err(|e| e.to_string())?;
    let r = capacity_fem(p, 0.1 / 16.0).map_err(|e| e.to_string())?;
    let rep = potential_checks(&r.field, &CutoffProfile::new(2, 1e-3, 0.1));
    let pass = rep.passed(1e-12);
    ok &= pass;
    let line = format!("slit potential: symmetry defect {:.3e}, max excess {:.3e} {}", rep.symmetry_defect, rep.max_excess, if pass { "ok" } else { "FAILED" });
    println!("{line}");
    io(writeln!(report, "{line}"))?;

    let dom = Domain2D::new(1.0, 1.0).map_err(|e| e.to_string())?;
    let o = rectangle_eigen_oracle(&dom, 1.0 / 32.0, 6).map_err(|e| e.to_string())?;
    let pass = o.max_rel_error <= 1e-5;
    ok &= pass;
    let line = format!("rectangle eigenvalues: max rel error {:.3e} {}", o.max_rel_error, if pass { "ok" } else { "FAILED" });
    println!("{line}");
    io(writeln!(report, "{line}"))?;
    io(report.flush())?;
    Ok(ok)
}
