//! Single evaluations and the generic sweep.

use crate::table::ResultTable;
use crate::{CliError, Ctx};
use fibergreen::config::{canonical_two_fiber_with_index, nfiber_ring_with_index, FiberArray, DEFAULT_CORE_INDEX};
use fibergreen::observables::{coupling_matrix, emitter_rates, pair_resonances_vs_dz, rates_at, CouplingMatrix, EmitterRates, ObservablesError};
use fibergreen::qdynamics::{concurrence, evolve, steady_concurrence, steady_state, transient_sweep, DensityMatrix, MasterEqSpec};
use fibergreen::spectral::{Solver, SpectralError, SpectralOptions};
use nalgebra::DMatrix;
use rayon::prelude::*;

pub const RATE_COLUMNS: [(&str, &str); 5] = [
    ("gamma_total_ratio", "Gamma0"),
    ("gamma_guided_ratio", "Gamma0"),
    ("eta", "1"),
    ("purcell", "1"),
    ("lamb_shift_ratio", "gamma0"),
];

pub fn rate_value(r: &EmitterRates, name: &str) -> f64 {
    match name {
        "gamma_total_ratio" => r.gamma_total_ratio,
        "gamma_guided_ratio" => r.gamma_guided_ratio,
        "eta" => r.eta,
        "purcell" => r.purcell,
        "lamb_shift_ratio" => r.lamb_shift_ratio.unwrap_or(f64::NAN),
        _ => unreachable!("validated observable"),
    }
}

fn core_index(f: &FiberArray) -> f64 {
    f.fibers.first().map_or(DEFAULT_CORE_INDEX, |x| x.index_core)
}

pub fn rates(ctx: &Ctx) -> Result<(), CliError> {
    let e = &ctx.cfg.emitter;
    let r = emitter_rates(e, &ctx.cfg.fibers, &ctx.cfg.solver)?;
    let mut cols = vec![("x_nm", "nm"), ("y_nm", "nm")];
    cols.extend(RATE_COLUMNS);
    let mut t = ResultTable::new("rates", &cols);
    let mut row = vec![e.rho_a_nm[0], e.rho_a_nm[1]];
    row.extend(RATE_COLUMNS.iter().map(|(n, _)| rate_value(&r, n)));
    t.push(row);
    ctx.write(&t)
}

pub fn modes(ctx: &Ctx) -> Result<(), CliError> {
    let e = &ctx.cfg.emitter;
    let fibers = &ctx.cfg.fibers;
    let solver = Solver::new(fibers, e.k(), SpectralOptions::from(&ctx.cfg.solver));
    let search = solver.poles()?;
    let modes = solver.guided_modes()?;
    let mut t = ResultTable::new(
        "modes",
        &[("index", "1"), ("beta_over_k", "1"), ("effective_index", "1"), ("dbeta_dk", "1"), ("group_velocity", "c"), ("partner", "1")],
    );
    for (i, m) in modes.iter().enumerate() {
        t.push(vec![i as f64, m.beta / e.k(), m.effective_index(), m.dbeta_dk, m.domega_dbeta, m.partner as f64]);
        t.note(format!("mode {i}: {}", m.label));
    }
    t.note(format!("m_max: {}", search.m_max));
    for w in &search.warnings {
        t.note(format!("warning: {w}"));
    }
    ctx.write(&t)
}

fn resonance_table(name: &str, c: &CouplingMatrix) -> (ResultTable, ResultTable) {
    let mut m = ResultTable::new(name, &[("i", "1"), ("j", "1"), ("omega", "Gamma0"), ("gamma", "Gamma0")]);
    for (i, (orow, grow)) in c.omega.iter().zip(&c.gamma).enumerate() {
        for (j, (o, g)) in orow.iter().zip(grow).enumerate() {
            m.push(vec![i as f64, j as f64, *o, *g]);
        }
    }
    let mut r = ResultTable::new(&format!("{name}_resonances"), &[("j", "1"), ("linewidth", "gamma0"), ("shift", "gamma0")]);
    for (j, (w, s)) in c.resonances_over_gamma0().into_iter().enumerate() {
        r.push(vec![j as f64, w, s]);
    }
    r.note("sorted narrowest first; gamma0 = Gamma0/2");
    (m, r)
}

pub fn coupling(ctx: &Ctx) -> Result<(), CliError> {
    let c = coupling_matrix(&ctx.cfg.emitters(), &ctx.cfg.fibers, &ctx.cfg.solver)?;
    let (m, r) = resonance_table("coupling", &c);
    ctx.write(&m)?;
    ctx.write(&r)
}

fn time_grid(ctx: &Ctx) -> Vec<f64> {
    if ctx.cfg.sweep.time.is_empty() {
        (0..=400).map(|i| 0.05 * i as f64).collect()
    } else {
        ctx.cfg.sweep.time.clone()
    }
}

/// Master-equation parameters in units of Γ: from the exact coupling matrix
/// when partners are configured, else the commensurate model with `η`.
fn master_spec(ctx: &Ctx, drive: f64) -> Result<(MasterEqSpec, String), CliError> {
    if !ctx.cfg.partners.is_empty() {
        let c = coupling_matrix(&ctx.cfg.emitters(), &ctx.cfg.fibers, &ctx.cfg.solver)?;
        let n = c.gamma.len();
        let g = c.gamma[0][0];
        // the common single-emitter shift is absorbed into the rotating frame
        let omega = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { c.omega[i][j] / g });
        let gamma = DMatrix::from_fn(n, n, |i, j| c.gamma[i][j] / g);
        Ok((MasterEqSpec::new(omega, gamma, drive)?, "exact coupling matrix in units of Gamma_11".into()))
    } else if let [eta] = ctx.cfg.sweep.eta[..] {
        Ok((MasterEqSpec::commensurate_pair(eta, drive)?, format!("commensurate pair, Gamma12 = {eta} Gamma")))
    } else {
        Err(CliError::Input("dynamics needs partners or exactly one sweep.eta value".into()))
    }
}

pub fn dynamics(ctx: &Ctx) -> Result<(), CliError> {
    let drive = ctx.cfg.sweep.drive.first().copied().unwrap_or(0.0);
    let (spec, model) = master_spec(ctx, drive)?;
    let n = spec.n_emitters();
    // undriven: first emitter excited; driven: all in the ground state
    let excited: Vec<bool> = (0..n).map(|j| j == 0 && drive == 0.0).collect();
    let ts = time_grid(ctx);
    let traj = evolve(&spec, &DensityMatrix::product(&excited)?, &ts)?;
    let mut cols: Vec<(String, &str)> = vec![("t".into(), "1/Gamma")];
    cols.extend((0..n).map(|j| (format!("population_{j}"), "1")));
    if n == 2 {
        cols.push(("concurrence".into(), "1"));
    }
    cols.push(("purity".into(), "1"));
    let cref: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), *b)).collect();
    let mut t = ResultTable::new("dynamics", &cref);
    for (time, rho) in ts.iter().zip(&traj) {
        let mut row = vec![*time];
        row.extend((0..n).map(|j| rho.population(j)));
        if n == 2 {
            row.push(concurrence(rho)?);
        }
        row.push(rho.purity());
        t.push(row);
    }
    t.note(format!("model: {model}; drive: {drive} Gamma"));
    ctx.write(&t)?;
    if drive > 0.0 {
        let ss = steady_state(&spec)?;
        let mut s = ResultTable::new("steady_state", &cref[1..]);
        let mut row: Vec<f64> = (0..n).map(|j| ss.rho.population(j)).collect();
        if n == 2 {
            row.push(concurrence(&ss.rho)?);
        }
        row.push(ss.rho.purity());
        s.push(row);
        s.note(format!("residual: {:e}", ss.residual));
        ctx.write(&s)?;
    }
    Ok(())
}

fn observables(ctx: &Ctx) -> Result<Vec<&'static str>, CliError> {
    let req = &ctx.cfg.sweep.observables;
    if req.is_empty() {
        return Ok(vec!["eta", "purcell"]);
    }
    req.iter()
        .map(|o| {
            RATE_COLUMNS
                .iter()
                .map(|c| c.0)
                .find(|c| c == o)
                .ok_or_else(|| CliError::Input(format!("sweep.observables: unknown '{o}' (expected one of {:?})", RATE_COLUMNS.map(|c| c.0))))
        })
        .collect()
}

fn unit_of(name: &str) -> &'static str {
    RATE_COLUMNS.iter().find(|c| c.0 == name).map_or("1", |c| c.1)
}

/// Rates of the configured emitter over a list of geometries, in order.
pub fn rates_over_geometries(ctx: &Ctx, geoms: &[FiberArray], lamb: bool) -> Result<Vec<EmitterRates>, CliError> {
    let e = &ctx.cfg.emitter;
    geoms
        .par_iter()
        .map(|f| Ok(rates_at(&[e.rho_a_nm], &e.dipole, e.k(), f, &ctx.cfg.solver, lamb)?[0]))
        .collect()
}

/// Like [`rates_over_geometries`], but a geometry whose azimuthal truncation
/// cannot converge (emitter nanometres from large fibers) yields `None`.
pub fn rates_or_unresolved(ctx: &Ctx, geoms: &[FiberArray], lamb: bool) -> Result<Vec<Option<EmitterRates>>, CliError> {
    let e = &ctx.cfg.emitter;
    geoms
        .par_iter()
        .map(|f| match rates_at(&[e.rho_a_nm], &e.dipole, e.k(), f, &ctx.cfg.solver, lamb) {
            Ok(r) => Ok(Some(r[0])),
            Err(ObservablesError::Spectral(SpectralError::TruncationNotConverged { .. })) => Ok(None),
            Err(other) => Err(other.into()),
        })
        .collect()
}

pub fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    let sw = &ctx.cfg.sweep;
    let e = &ctx.cfg.emitter;
    let obs = observables(ctx)?;
    let lamb = obs.contains(&"lamb_shift_ratio");
    let index = core_index(&ctx.cfg.fibers);
    let with_obs = |axes: &[(&'static str, &'static str)]| -> Vec<(&'static str, &'static str)> {
        let mut c = axes.to_vec();
        c.extend(obs.iter().map(|&o| (o, unit_of(o))));
        c
    };
    let table = if !sw.fiber_count.is_empty() {
        let d = match sw.separation_nm[..] {
            [d] => d,
            _ => return Err(CliError::Input("ring sweep needs exactly one sweep.separation_nm".into())),
        };
        if sw.radius_nm.is_empty() {
            return Err(CliError::Input("ring sweep needs sweep.radius_nm".into()));
        }
        let keys: Vec<(usize, f64)> = sw.fiber_count.iter().flat_map(|&n| sw.radius_nm.iter().map(move |&a| (n, a))).collect();
        let geoms = keys.iter().map(|&(n, a)| nfiber_ring_with_index(n, a, d, index)).collect::<Result<Vec<_>, _>>()?;
        let rs = rates_over_geometries(ctx, &geoms, lamb)?;
        let mut t = ResultTable::new("sweep", &with_obs(&[("fiber_count", "1"), ("radius_nm", "nm"), ("separation_nm", "nm")]));
        for (&(n, a), r) in keys.iter().zip(&rs) {
            let mut row = vec![n as f64, a, d];
            row.extend(obs.iter().map(|o| rate_value(r, o)));
            t.push(row);
        }
        t
    } else if !sw.radius_nm.is_empty() || !sw.separation_nm.is_empty() {
        if sw.radius_nm.is_empty() || sw.separation_nm.is_empty() {
            return Err(CliError::Input("two-fiber sweep needs both sweep.radius_nm and sweep.separation_nm".into()));
        }
        let keys: Vec<(f64, f64)> = sw.radius_nm.iter().flat_map(|&a| sw.separation_nm.iter().map(move |&d| (a, d))).collect();
        let geoms = keys.iter().map(|&(a, d)| canonical_two_fiber_with_index(a, d, index)).collect::<Result<Vec<_>, _>>()?;
        let rs = rates_over_geometries(ctx, &geoms, lamb)?;
        let mut t = ResultTable::new("sweep", &with_obs(&[("radius_nm", "nm"), ("separation_nm", "nm")]));
        for (&(a, d), r) in keys.iter().zip(&rs) {
            let mut row = vec![a, d];
            row.extend(obs.iter().map(|o| rate_value(r, o)));
            t.push(row);
        }
        t
    } else if !sw.x_nm.is_empty() || !sw.y_nm.is_empty() {
        if sw.x_nm.is_empty() || sw.y_nm.is_empty() {
            return Err(CliError::Input("position sweep needs both sweep.x_nm and sweep.y_nm".into()));
        }
        let (pts, skipped) = grid_points(&ctx.cfg.fibers, &sw.x_nm, &sw.y_nm);
        let rs = rates_at(&pts, &e.dipole, e.k(), &ctx.cfg.fibers, &ctx.cfg.solver, lamb)?;
        let mut t = ResultTable::new("sweep", &with_obs(&[("x_nm", "nm"), ("y_nm", "nm")]));
        for (p, r) in pts.iter().zip(&rs) {
            let mut row = vec![p[0], p[1]];
            row.extend(obs.iter().map(|o| rate_value(r, o)));
            t.push(row);
        }
        t.note(format!("skipped {skipped} grid points inside or within {SURFACE_MARGIN_NM} nm of a fiber"));
        t
    } else if !sw.dz_nm.is_empty() {
        let cs = pair_resonances_vs_dz(e, &sw.dz_nm, &ctx.cfg.fibers, &ctx.cfg.solver)?;
        let mut t = ResultTable::new("sweep", &PAIR_COLUMNS);
        for (&dz, c) in sw.dz_nm.iter().zip(&cs) {
            t.push(pair_row(dz, c));
        }
        t.note("linewidth/shift: collective resonances (narrowest first) in gamma0 = Gamma0/2");
        t
    } else if !sw.eta.is_empty() && !sw.drive.is_empty() {
        let keys: Vec<(f64, f64)> = sw.drive.iter().flat_map(|&o| sw.eta.iter().map(move |&h| (o, h))).collect();
        let cs = keys.par_iter().map(|&(o, h)| steady_concurrence(h, o)).collect::<Result<Vec<_>, _>>()?;
        let mut t = ResultTable::new("sweep", &[("drive", "Gamma"), ("eta", "1"), ("steady_concurrence", "1")]);
        for (&(o, h), c) in keys.iter().zip(&cs) {
            t.push(vec![o, h, *c]);
        }
        t
    } else if !sw.eta.is_empty() {
        let t_max = sw.time.last().copied().unwrap_or(20.0);
        let pts = transient_sweep(&sw.eta, t_max)?;
        let mut t = ResultTable::new("sweep", &[("eta", "1"), ("max_concurrence", "1"), ("max_transfer", "1")]);
        for p in pts {
            t.push(vec![p.eta, p.max_concurrence, p.max_transfer]);
        }
        t.note(format!("from |eg>, no drive, up to Gamma t = {t_max}"));
        t
    } else {
        return Err(CliError::Input("sweep: no axes given in [sweep]".into()));
    };
    ctx.write(&table)
}

/// Grid points are dropped this close to a fiber surface.
pub const SURFACE_MARGIN_NM: f64 = 1.0;

/// Row-major `(x, y)` grid minus points inside or at fibers.
pub fn grid_points(f: &FiberArray, xs: &[f64], ys: &[f64]) -> (Vec<[f64; 2]>, usize) {
    let all: Vec<[f64; 2]> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| [x, y])).collect();
    let n = all.len();
    let keep: Vec<[f64; 2]> = all.into_iter().filter(|&p| f.surface_gap(p) > SURFACE_MARGIN_NM).collect();
    let skipped = n - keep.len();
    (keep, skipped)
}

pub const PAIR_COLUMNS: [(&str, &str); 7] = [
    ("dz_nm", "nm"),
    ("linewidth_sub", "gamma0"),
    ("shift_sub", "gamma0"),
    ("linewidth_sup", "gamma0"),
    ("shift_sup", "gamma0"),
    ("omega12", "Gamma0"),
    ("gamma12", "Gamma0"),
];

pub fn pair_row(dz: f64, c: &CouplingMatrix) -> Vec<f64> {
    let r = c.resonances_over_gamma0();
    vec![dz, r[0].0, r[0].1, r[1].0, r[1].1, c.omega[0][1], c.gamma[0][1]]
}
