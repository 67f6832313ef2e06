//! Subcommands. Each writes its artifacts and returns a one-line headline.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use pwlab::characteristics::RootSystem;
use pwlab::geometry::{broken_flow, wavefront_propagate, SwitchKind};
use pwlab::grid::{write_csv, Grid, SpectralField};
use pwlab::lpscan::{lp_scan, LpScanParams, Packet};
use pwlab::measure::{
    component_length_exponents, sigma_decomposition, sublevel_report, xi_measure, Polynomial, SublevelFn, TimeSymbol, XiParams,
};
use pwlab::propagator::{empirical_order, ProbeParams, Propagator};
use pwlab::spectral::{weyl_report, WeylParams};
use pwlab::symdsl::PhasePoint;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::OutDir;
use crate::config::{FamilyConfig, LpPacketConfig, RunConfig, SeedConfig};
use crate::error::{compute, config, CliError};
use crate::model::{condition_params, flow_params, propagator_params, symbol, Model, ModelSummary};

fn grid(cfg: &RunConfig) -> Result<Grid, CliError> {
    Grid::new(&cfg.grid).map_err(config)
}

fn propagator(cfg: &RunConfig, model: &Model, command: &str, horizon: f64) -> Result<Propagator, CliError> {
    let spec = model.spec(grid(cfg)?, horizon, command)?;
    Propagator::new(spec, propagator_params(cfg)).map_err(compute)
}

fn seeds(cfg: &RunConfig, seeds: &[SeedConfig]) -> Result<Vec<PhasePoint>, CliError> {
    cfg.check_seeds(seeds)?;
    seeds.iter().map(|s| PhasePoint::new(&s.x, &s.xi).map_err(config)).collect()
}

fn point_json(p: &PhasePoint) -> Value {
    json!({ "x": p.x(), "xi": p.xi() })
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn check(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let report = model.condition_c(&condition_params(cfg));
    #[derive(Serialize)]
    struct Out<'a> {
        system: ModelSummary,
        report: &'a pwlab::characteristics::BracketReport,
    }
    out.json("check.json", &Out { system: model.summary(), report: &report })?;
    Ok(json!({ "M": report.m, "failed": report.failed() }))
}

/// amplitude·e^{i freq·x}·exp(−|x − center|²/(2 width²)) with periodic distance.
fn packet(g: &Grid, center: &[f64], width: f64, freq: &[f64], amplitude: C64) -> SpectralField {
    SpectralField::from_fn(g, |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, c)| ((a - c + PI).rem_euclid(TAU) - PI).powi(2)).sum();
        let phase: f64 = x.iter().zip(freq).map(|(a, k)| a * k).sum();
        amplitude * C64::from_polar((-r2 / (2.0 * width * width)).exp(), phase)
    })
}

pub fn solve(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    cfg.check_packets()?;
    let s = &cfg.solve;
    let t = s.t.unwrap_or(cfg.horizon);
    let prop = propagator(cfg, model, "solve", cfg.horizon.max(t))?;
    let g = prop.grid().clone();
    let mut data = vec![SpectralField::zeros(&g); model.data_components()];
    for p in &s.initial {
        let slot = data
            .get_mut(p.component)
            .ok_or_else(|| CliError::Config(format!("packet component {} of {} data components", p.component, model.data_components())))?;
        let amp = C64::new(p.amplitude[0], p.amplitude[1]);
        *slot = slot.add(&packet(&g, &p.center, p.width, &p.freq, amp)).map_err(config)?;
    }
    let u0 = model.initial_state(data)?;
    let mut report = prop.picard_solve(&u0, t, s.n, s.nodes).map_err(compute)?;
    if s.reference {
        let reference = prop.reference_solve(&u0, t).map_err(compute)?;
        report = report.with_reference(&reference);
    }
    let summary = report.summary();
    #[derive(Serialize)]
    struct Out {
        system: ModelSummary,
        initial_norm: f64,
        solve: pwlab::propagator::SolveSummary,
    }
    out.json("solve.json", &Out { system: model.summary(), initial_norm: u0.l2_norm(), solve: summary.clone() })?;
    out.fields("solution.bin", &report.u)?;
    out.csv("solution.csv", |w| write_csv(w, &report.u))?;
    Ok(json!({ "residual": summary.residual, "tail_bound": summary.tail_bound, "u_norm": summary.u_norm }))
}

pub fn smoothing(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let s = &cfg.smoothing;
    let prop = propagator(cfg, model, "smoothing", cfg.horizon.max(s.t))?;
    let params = ProbeParams { t: s.t, nodes: s.nodes, probes: s.probes, seed: cfg.seed };
    let tables = prop.smoothing_probe(&s.levels, &s.bands, &params).map_err(compute)?;
    let n_emp: Vec<f64> = tables.iter().map(|t| empirical_order(&t.rows)).collect();
    #[derive(Serialize)]
    struct Out<'a> {
        system: ModelSummary,
        tables: &'a [pwlab::propagator::SmoothingTable],
        n_emp: &'a [f64],
    }
    out.json("smoothing.json", &Out { system: model.summary(), tables: &tables, n_emp: &n_emp })?;
    out.csv("smoothing.csv", |w| {
        writeln!(w, "level,band,rho")?;
        for t in &tables {
            for r in &t.rows {
                writeln!(w, "{},{},{}", t.level, r.band, fmt(r.rho))?;
            }
        }
        Ok(())
    })?;
    // +∞ (all ρ zero) is not JSON; the headline reports it as null
    Ok(json!({ "n_emp": n_emp.iter().map(|v| v.is_finite().then_some(*v)).collect::<Vec<_>>() }))
}

/// Every ordered pair of distinct group representatives.
fn default_sequences(roots: &RootSystem) -> Vec<Vec<usize>> {
    let reps: Vec<usize> = roots.groups.iter().map(|g| g[0]).collect();
    let mut out = Vec::new();
    for &a in &reps {
        for &b in &reps {
            if a != b {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

pub fn flow(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let roots = model.roots();
    let points = seeds(cfg, &cfg.flow.seeds)?;
    let sequences = if cfg.flow.sequences.is_empty() { default_sequences(roots) } else { cfg.flow.sequences.clone() };
    let fp = flow_params(cfg);
    let mut trajectories = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for j in &sequences {
            let tr = broken_flow(&roots.roots, j, p, cfg.horizon, &fp).map_err(compute)?;
            trajectories.push((i, tr));
        }
    }
    let docs: Vec<Value> = trajectories
        .iter()
        .map(|(i, tr)| {
            json!({
                "seed": i,
                "j": tr.j,
                "complete": tr.complete,
                "switch_times": tr.switch_times,
                "switch_kinds": tr.switch_kinds,
                "switch_points": tr.switch_points.iter().map(point_json).collect::<Vec<_>>(),
                "end": point_json(&tr.end()),
            })
        })
        .collect();
    let complete = trajectories.iter().filter(|(_, tr)| tr.complete).count();
    let touches = trajectories.iter().flat_map(|(_, tr)| &tr.switch_kinds).filter(|k| **k == SwitchKind::Touch).count();
    out.json("flow.json", &json!({ "system": model.summary(), "horizon": cfg.horizon, "trajectories": docs }))?;
    let n = cfg.dimension;
    out.csv("flow.csv", |w| {
        let mut header = vec!["seed".to_string(), "sequence".into(), "t".into()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xi{i}")));
        header.push("active".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, tr) in &trajectories {
            let seq = tr.j.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-");
            for s in &tr.states {
                let mut row = vec![i.to_string(), seq.clone(), fmt(s.t)];
                row.extend(s.point.x().iter().map(|v| fmt(*v)));
                row.extend(s.point.xi().iter().map(|v| fmt(*v)));
                row.push(tr.j[s.segment].to_string());
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    })?;
    Ok(json!({ "trajectories": trajectories.len(), "complete": complete, "touches": touches }))
}

pub fn wavefront(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let points = seeds(cfg, &cfg.wavefront.seeds)?;
    let ends = wavefront_propagate(model.roots(), &points, cfg.horizon, cfg.wavefront.max_switches, &flow_params(cfg)).map_err(compute)?;
    let docs: Vec<Value> = ends.iter().map(|w| json!({ "seed": w.seed, "j": w.j, "end": point_json(&w.end) })).collect();
    out.json("wavefront.json", &json!({ "system": model.summary(), "horizon": cfg.horizon, "endpoints": docs }))?;
    Ok(json!({ "endpoints": ends.len() }))
}

fn sublevel_suite<F: SublevelFn>(cfg: &RunConfig, family: &[F]) -> Result<Value, CliError> {
    let s = &cfg.sublevel;
    let report = sublevel_report(family, cfg.horizon, &s.eps, s.m, s.base);
    let exponents = component_length_exponents(family, cfg.horizon, &s.eps, s.m, s.c, s.base).map_err(compute)?;
    let mut decompositions = Vec::new();
    for &eps in &s.eps {
        let mut defect: f64 = 0.0;
        let mut beyond: f64 = 0.0;
        let mut components = vec![0usize; s.m];
        for f in family {
            let d = sigma_decomposition(f, cfg.horizon, eps, s.m, s.c, s.base).map_err(compute)?;
            defect = defect.max(d.cover_defect());
            beyond = beyond.max(d.beyond.measure());
            for (c, k) in components.iter_mut().zip(&d.components) {
                *c = (*c).max(*k);
            }
        }
        decompositions.push(json!({ "eps": eps, "cover_defect": defect, "beyond_measure": beyond, "max_components": components }));
    }
    Ok(json!({ "report": report, "component_length_exponents": exponents, "decompositions": decompositions }))
}

pub fn sublevel(cfg: &RunConfig, _model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let doc = match &cfg.sublevel.family {
        FamilyConfig::Polynomials { coefficients } => {
            let family: Vec<Polynomial> = coefficients.iter().map(|c| Polynomial(c.clone())).collect();
            sublevel_suite(cfg, &family)?
        }
        FamilyConfig::Symbol { expr, points } => {
            let a = symbol(expr, cfg.dimension)?;
            let family: Vec<TimeSymbol> =
                seeds(cfg, points)?.iter().map(|p| TimeSymbol::new(&a, p, cfg.sublevel.m + 1)).collect();
            sublevel_suite(cfg, &family)?
        }
    };
    let headline = json!({ "fitted_exponent": doc["report"]["fitted_exponent"], "pass": doc["report"]["pass"] });
    out.json("sublevel.json", &doc)?;
    Ok(headline)
}

pub fn xi(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let x = &cfg.xi;
    let params = XiParams { horizon: cfg.horizon, samples: x.samples, c: x.c, seed: cfg.seed, m: x.m };
    let report = xi_measure(&model.roots().roots, &x.j, &x.eps, &params, &flow_params(cfg)).map_err(compute)?;
    out.json("xi.json", &json!({ "system": model.summary(), "params": params, "report": report }))?;
    Ok(json!({ "exponent": report.exponent, "target": report.target }))
}

pub fn weyl(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let w = &cfg.weyl;
    let params = WeylParams {
        cutoff: w.cutoff,
        window: w.window,
        points: w.points,
        samples: w.samples,
        seed: cfg.seed,
        period_seeds: w.period_seeds,
        period_window: w.period_window,
        period_tol: w.period_tol,
    };
    let report = weyl_report(model.roots(), model.coupling("weyl")?, &params).map_err(compute)?;
    let mut doc = serde_json::to_value(&report).map_err(compute)?;
    if let Value::Object(m) = &mut doc {
        for k in ["eigenvalues", "lambda", "counts"] {
            m.remove(k);
        }
    }
    out.json("weyl.json", &json!({ "system": model.summary(), "params": params, "report": doc }))?;
    out.csv("eigenvalues.csv", |f| {
        writeln!(f, "index,eigenvalue")?;
        for (i, v) in report.eigenvalues.iter().enumerate() {
            writeln!(f, "{i},{}", fmt(*v))?;
        }
        Ok(())
    })?;
    out.csv("counting.csv", |f| {
        writeln!(f, "lambda,N")?;
        for (l, c) in report.lambda.iter().zip(&report.counts) {
            writeln!(f, "{},{c}", fmt(*l))?;
        }
        Ok(())
    })?;
    Ok(json!({ "c_n": report.fit.c_n, "prediction": report.prediction, "rel_error": report.rel_error }))
}

pub fn lpscan(cfg: &RunConfig, model: &Model, out: &mut OutDir) -> Result<Value, CliError> {
    let l = &cfg.lpscan;
    let params = LpScanParams {
        p_values: l.p_values.clone(),
        bands: l.bands.clone(),
        t: l.t,
        alpha_scale: l.alpha_scale,
        packet: match l.packet {
            LpPacketConfig::Plane { angle } => Packet::Plane { angle },
            LpPacketConfig::Focusing => Packet::Focusing,
        },
        width: l.width,
        component: l.component,
        levels: l.levels,
        nodes: l.nodes,
    };
    let prop = propagator(cfg, model, "lpscan", cfg.horizon.max(l.t))?;
    let scan = lp_scan(&prop, &params).map_err(compute)?;
    out.json("lpscan.json", &json!({ "system": model.summary(), "scan": scan }))?;
    out.csv("lpscan.csv", |w| {
        writeln!(w, "p,band,alpha,norm_out,norm_in,ratio")?;
        for r in &scan.rows {
            writeln!(w, "{},{},{},{},{},{}", fmt(r.p), r.band, fmt(r.alpha), fmt(r.norm_out), fmt(r.norm_in), fmt(r.ratio))?;
        }
        Ok(())
    })?;
    Ok(json!({ "spreads": scan.spreads }))
}
