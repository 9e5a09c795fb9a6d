//! Canned figure sweeps. Default grids are reduced for desk-scale runtimes;
//! `--full-res` switches to the dense ones.

use crate::commands::{grid_points, pair_row, rates_or_unresolved, rates_over_geometries, PAIR_COLUMNS, SURFACE_MARGIN_NM};
use crate::table::ResultTable;
use crate::{CliError, Ctx, Target};
use fibergreen::config::{
    canonical_two_fiber_with_index, nfiber_ring_with_index, Config, Dipole, EmitterSpec, FiberArray, SolverSettings, SweepConfig,
    DEFAULT_CORE_INDEX,
};
use fibergreen::cylscatter::C64;
use fibergreen::observables::{pair_resonances_asymptotic, pair_resonances_vs_dz, rates_at};
use fibergreen::qdynamics::{
    concurrence, eta_threshold, evolve, steady_concurrence, transient, transient_sweep, DensityMatrix, MasterEqSpec,
};
use fibergreen::spectral::M_MAX_CAP;
use rayon::prelude::*;

fn x_dipole() -> Dipole {
    Dipole::new([C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]).expect("unit")
}

fn two(a: f64, d: f64) -> FiberArray {
    canonical_two_fiber_with_index(a, d, DEFAULT_CORE_INDEX).expect("valid canonical pair")
}

/// Geometry each target starts from; `--config` replaces it.
pub fn default_config(target: Target) -> Config {
    let (a, d) = match target {
        Target::Fig1d | Target::Fig1f => (150.0, 200.0),
        Target::Fig2a => (180.0, 300.0),
        Target::Fig2bF => (200.0, 200.0),
        _ => (150.0, 200.0),
    };
    Config {
        fibers: two(a, d),
        emitter: EmitterSpec::new([0.0, 0.0], 0.0, x_dipole()),
        partners: Vec::new(),
        solver: SolverSettings::default(),
        sweep: SweepConfig::default(),
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn index(ctx: &Ctx) -> f64 {
    ctx.cfg.fibers.fibers.first().map_or(DEFAULT_CORE_INDEX, |f| f.index_core)
}

pub fn run(ctx: &Ctx, target: Target) -> Result<(), CliError> {
    match target {
        Target::Fig1b | Target::Fig1c => center_grid(ctx, target),
        Target::Fig1d | Target::Fig1f => position_grid(ctx, target),
        Target::Fig2a => fig2a(ctx),
        Target::Fig2bF => fig2bf(ctx),
        Target::SuppN => supp_n(ctx),
    }
}

/// η or F_p of the centred emitter over radius × separation.
fn center_grid(ctx: &Ctx, target: Target) -> Result<(), CliError> {
    let (na, nd) = if ctx.full_res { (41, 41) } else { (9, 9) };
    let radii = linspace(100.0, 300.0, na);
    let gaps = linspace(10.0, 410.0, nd);
    let keys: Vec<(f64, f64)> = radii.iter().flat_map(|&a| gaps.iter().map(move |&d| (a, d))).collect();
    let n = index(ctx);
    let geoms = keys.iter().map(|&(a, d)| canonical_two_fiber_with_index(a, d, n)).collect::<Result<Vec<_>, _>>()?;
    let rs = rates_or_unresolved(ctx, &geoms, false)?;
    let (name, col, unit) = if target == Target::Fig1b { ("fig1b", "eta", "1") } else { ("fig1c", "purcell", "1") };
    let mut t = ResultTable::new(name, &[("radius_nm", "nm"), ("separation_nm", "nm"), (col, unit)]);
    let mut skipped = Vec::new();
    for (&(a, d), r) in keys.iter().zip(&rs) {
        match r {
            Some(r) => t.push(vec![a, d, if target == Target::Fig1b { r.eta } else { r.purcell }]),
            None => skipped.push(format!("({a}, {d})")),
        }
    }
    t.note("emitter at the array center; dipole from the config");
    if !skipped.is_empty() {
        t.note(format!("omitted, truncation unconverged at m_max = {M_MAX_CAP}: {}", skipped.join(" ")));
    }
    ctx.write(&t)
}

/// η (fig1d) or Δω/γ₀ (fig1f) over the transverse plane.
fn position_grid(ctx: &Ctx, target: Target) -> Result<(), CliError> {
    let (nx, ny) = if ctx.full_res { (121, 81) } else { (41, 27) };
    let xs = linspace(-700.0, 700.0, nx);
    let ys = linspace(-400.0, 400.0, ny);
    let f = &ctx.cfg.fibers;
    let (pts, skipped) = grid_points(f, &xs, &ys);
    let e = &ctx.cfg.emitter;
    let lamb = target == Target::Fig1f;
    // one call per row keeps the worker pool busy and memory bounded
    let rows: Vec<Vec<[f64; 2]>> = ys.iter().map(|&y| pts.iter().copied().filter(|p| p[1] == y).collect()).collect();
    let rs = rows
        .par_iter()
        .map(|row| if row.is_empty() { Ok(Vec::new()) } else { rates_at(row, &e.dipole, e.k(), f, &ctx.cfg.solver, lamb) })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = if lamb {
        ResultTable::new("fig1f", &[("x_nm", "nm"), ("y_nm", "nm"), ("lamb_shift_ratio", "gamma0"), ("eta", "1")])
    } else {
        ResultTable::new("fig1d", &[("x_nm", "nm"), ("y_nm", "nm"), ("eta", "1"), ("purcell", "1")])
    };
    for (row, r) in rows.iter().flatten().zip(rs.iter().flatten()) {
        if lamb {
            t.push(vec![row[0], row[1], r.lamb_shift_ratio.expect("full path"), r.eta]);
        } else {
            t.push(vec![row[0], row[1], r.eta, r.purcell]);
        }
    }
    t.note(format!("skipped {skipped} grid points inside or within {SURFACE_MARGIN_NM} nm of a fiber"));
    ctx.write(&t)
}

/// Collective resonances vs. axial separation, exact and long-range form.
fn fig2a(ctx: &Ctx) -> Result<(), CliError> {
    let e = &ctx.cfg.emitter;
    let lambda = e.wavelength_nm;
    let n = if ctx.full_res { 300 } else { 60 };
    let dzs = linspace(0.1 * lambda, 6.0 * lambda, n);
    let exact = pair_resonances_vs_dz(e, &dzs, &ctx.cfg.fibers, &ctx.cfg.solver)?;
    let asym = pair_resonances_asymptotic(e, &dzs, &ctx.cfg.fibers, &ctx.cfg.solver)?;
    let mut cols = vec![("dz_over_lambda", "1")];
    cols.extend(PAIR_COLUMNS[1..].iter().copied());
    let asym_names = ["linewidth_sub_asym", "shift_sub_asym", "linewidth_sup_asym", "shift_sup_asym", "omega12_asym", "gamma12_asym"];
    cols.extend(asym_names.iter().zip(&PAIR_COLUMNS[1..]).map(|(n, c)| (*n, c.1)));
    let mut t = ResultTable::new("fig2a", &cols);
    for ((&dz, x), a) in dzs.iter().zip(&exact).zip(&asym) {
        let mut row = pair_row(dz, x);
        row[0] = dz / lambda;
        row.extend(pair_row(dz, a)[1..].iter().copied());
        t.push(row);
    }
    t.note("sub/sup: narrowest/widest collective resonance; gamma0 = Gamma0/2; *_asym from the guided-mode long-range form");
    ctx.write(&t)
}

/// Coupling efficiency of the configured emitter with the array and with a
/// single fiber at the same surface distance.
fn two_and_one(ctx: &Ctx) -> Result<(f64, f64), CliError> {
    let f = &ctx.cfg.fibers;
    let e = &ctx.cfg.emitter;
    let gap = f.surface_gap(e.rho_a_nm);
    let fiber = f.fibers.first().ok_or_else(|| CliError::Input("fig2b-f needs at least one fiber".into()))?;
    let single = nfiber_ring_with_index(1, fiber.radius_nm, 2.0 * gap, fiber.index_core)?;
    let r2 = rates_at(&[e.rho_a_nm], &e.dipole, e.k(), f, &ctx.cfg.solver, false)?[0].eta;
    let r1 = rates_at(&[[0.0, 0.0]], &e.dipole, e.k(), &single, &ctx.cfg.solver, false)?[0].eta;
    Ok((r2, r1))
}

fn fig2bf(ctx: &Ctx) -> Result<(), CliError> {
    let (eta2, eta1) = two_and_one(ctx)?;
    let note = format!("eta two fibers: {eta2}; eta single fiber at the same surface distance: {eta1}");
    let samples = if ctx.full_res { 2001 } else { 401 };
    let t_max = 20.0;

    let (ts, c2, p2) = transient(eta2, t_max, samples)?;
    let (_, c1, p1) = transient(eta1, t_max, samples)?;
    let mut b = ResultTable::new("fig2b", &[("t", "1/Gamma"), ("concurrence_two", "1"), ("concurrence_one", "1")]);
    let mut c = ResultTable::new("fig2c", &[("t", "1/Gamma"), ("population2_two", "1"), ("population2_one", "1")]);
    for i in 0..ts.len() {
        b.push(vec![ts[i], c2[i], c1[i]]);
        c.push(vec![ts[i], p2[i], p1[i]]);
    }
    for t in [&mut b, &mut c] {
        t.note(&note);
        t.note("from |eg>, no drive, Gamma12 = eta Gamma");
    }

    let etas = linspace(0.0, 1.0, if ctx.full_res { 101 } else { 21 });
    let mut d = ResultTable::new("fig2d", &[("eta", "1"), ("max_concurrence", "1"), ("max_transfer", "1")]);
    for p in transient_sweep(&etas, t_max)? {
        d.push(vec![p.eta, p.max_concurrence, p.max_transfer]);
    }

    let n = if ctx.full_res { 61 } else { 21 };
    let drives = linspace(0.05, 1.0, n);
    // η = 1 itself has a dark state and no unique steady state
    let etas_e = linspace(0.0, 1.0 - 1e-6, n);
    let keys: Vec<(f64, f64)> = drives.iter().flat_map(|&o| etas_e.iter().map(move |&h| (o, h))).collect();
    let css = keys.par_iter().map(|&(o, h)| steady_concurrence(h, o)).collect::<Result<Vec<_>, _>>()?;
    let mut e = ResultTable::new("fig2e", &[("drive", "Gamma"), ("eta", "1"), ("steady_concurrence", "1")]);
    for (&(o, h), cv) in keys.iter().zip(&css) {
        e.push(vec![o, h, *cv]);
    }
    let th = drives.par_iter().map(|&o| eta_threshold(o, 1e-4)).collect::<Result<Vec<_>, _>>()?;
    let mut eth = ResultTable::new("fig2e_threshold", &[("drive", "Gamma"), ("eta_threshold", "1")]);
    for (&o, t) in drives.iter().zip(&th) {
        if let Some(t) = t {
            eth.push(vec![o, *t]);
        }
    }
    eth.note("smallest eta with non-zero steady-state concurrence; drives without one are omitted");

    let drive = 0.45;
    let ts_f = linspace(0.0, t_max, samples);
    let ground = DensityMatrix::product(&[false, false])?;
    let conc = |eta: f64| -> Result<Vec<f64>, CliError> {
        let traj = evolve(&MasterEqSpec::commensurate_pair(eta, drive)?, &ground, &ts_f)?;
        Ok(traj.iter().map(concurrence).collect::<Result<Vec<_>, _>>()?)
    };
    let (f2, f1) = (conc(eta2)?, conc(eta1)?);
    let mut f = ResultTable::new("fig2f", &[("t", "1/Gamma"), ("concurrence_two", "1"), ("concurrence_one", "1")]);
    for i in 0..ts_f.len() {
        f.push(vec![ts_f[i], f2[i], f1[i]]);
    }
    f.note(&note);
    f.note(format!("from |gg>, drive {drive} Gamma"));

    for t in [&b, &c, &d, &e, &eth, &f] {
        ctx.write(t)?;
    }
    Ok(())
}

/// Ring of N fibers at d/2 = 250 nm, emitter at the ring center.
fn supp_n(ctx: &Ctx) -> Result<(), CliError> {
    let radii = if ctx.full_res { linspace(80.0, 280.0, 41) } else { linspace(80.0, 240.0, 9) };
    let n = index(ctx);
    let keys: Vec<(usize, f64)> = (1..=4).flat_map(|c| radii.iter().map(move |&a| (c, a))).collect();
    let geoms = keys.iter().map(|&(c, a)| nfiber_ring_with_index(c, a, 500.0, n)).collect::<Result<Vec<_>, _>>()?;
    let centered = Ctx {
        cfg: Config { emitter: EmitterSpec { rho_a_nm: [0.0, 0.0], ..ctx.cfg.emitter }, ..ctx.cfg.clone() },
        out_dir: ctx.out_dir.clone(),
        full_res: ctx.full_res,
        command: ctx.command.clone(),
    };
    let rs = rates_over_geometries(&centered, &geoms, false)?;
    let mut t = ResultTable::new("suppN", &[("fiber_count", "1"), ("radius_nm", "nm"), ("eta", "1"), ("purcell", "1")]);
    for (&(c, a), r) in keys.iter().zip(&rs) {
        t.push(vec![c as f64, a, r.eta, r.purcell]);
    }
    for c in 1..=4 {
        let best = keys.iter().zip(&rs).filter(|(k, _)| k.0 == c).max_by(|x, y| x.1.eta.total_cmp(&y.1.eta)).expect("non-empty");
        t.note(format!("N = {c}: max eta {} at a = {} nm", best.1.eta, best.0 .1));
    }
    t.note(format!("surface distance d/2 = 250 nm; wavelength {} nm", ctx.cfg.emitter.wavelength_nm));
    ctx.write(&t)
}
