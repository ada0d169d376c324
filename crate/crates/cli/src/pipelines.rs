use std::path::{Path, PathBuf};

use pumpsim::evolve::PropagatorConfig;
use pumpsim::full::{initial_aux_field, run_full, InitialBand};
use pumpsim::linalg::max_abs;
use pumpsim::model::{BlochSampler, Frozen, MomentumGrid, RiceMele};
use pumpsim::observables::{
    offset_subtract_peak, track_com, OffsetEstimator, PeakAnalysis, PositionDistribution,
};
use pumpsim::oracle::brute_force_rho_aux;
use pumpsim::single::run_single;
use pumpsim::spectral::{chern_number, smooth_band};
use pumpsim::thermal::{MeanFieldSampler, ThermalParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{Model, Pipeline, RunConfig, SCAN_GRID, SCHEMA_VERSION};
use crate::error::{CliError, CliResult};
use crate::output::{write_meta, write_series, Dispersion, Series};

pub const ORACLE_TOL: f64 = 1e-8;
pub const MIN_ETA_TAU: f64 = 5.0;

pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub check_convergence: bool,
}

pub fn run(ctx: &Context) -> CliResult<()> {
    let model = Model::resolve(&ctx.config)?;
    match ctx.config.pipeline {
        Pipeline::Single => single(ctx, &model),
        Pipeline::Meanfield | Pipeline::Full => {
            let temps = ctx.config.thermal()?.t_over_gap.clone();
            for t_over_gap in temps {
                sweep_point(ctx, &model, t_over_gap)?;
            }
            Ok(())
        }
        Pipeline::OracleCheck => oracle_check(ctx, &model),
        Pipeline::Chern => {
            let report = chern_report(&ctx.config, &model)?;
            println!("{}", summary_line(&report));
            write_meta(&ctx.out, &report)
        }
    }
}

fn propagator(steps: usize) -> CliResult<PropagatorConfig> {
    Ok(PropagatorConfig::with_steps(steps)?)
}

/// Peak analysis at every output time. A missing peak is tolerated mid-run
/// but not at the last output.
fn peaks(dists: &[PositionDistribution], est: OffsetEstimator) -> CliResult<Vec<Option<PeakAnalysis>>> {
    let last = dists.len() - 1;
    dists
        .iter()
        .enumerate()
        .map(|(i, p)| match offset_subtract_peak(p, &dists[0], est) {
            Ok(pk) => Ok(Some(pk)),
            Err(pumpsim::Error::NoPeak { .. }) if i < last => Ok(None),
            Err(e) => Err(e.into()),
        })
        .collect()
}

fn single_series(
    sampler: &dyn BlochSampler,
    grid: &MomentumGrid,
    band: usize,
    n0: i64,
    times: &[f64],
    steps: usize,
    est: OffsetEstimator,
) -> CliResult<Series> {
    let run = run_single(sampler, grid, band, n0, times, &propagator(steps)?)?;
    Ok(Series {
        n0,
        times: times.to_vec(),
        moments: run.records.iter().map(|r| (r.r, r.var)).collect(),
        dispersion: run.records.iter().map(|r| (r.a, r.b)).collect(),
        peaks: peaks(&run.distributions, est)?,
        distributions: run.distributions,
    })
}

#[allow(clippy::too_many_arguments)]
fn full_series(
    system: &RiceMele,
    tp: &ThermalParams,
    eta: f64,
    band: InitialBand,
    grid: &MomentumGrid,
    n0: i64,
    times: &[f64],
    steps: usize,
    est: OffsetEstimator,
) -> CliResult<Series> {
    let init = initial_aux_field(system, tp, eta, grid, n0, band)?;
    let run = run_full(system, tp, eta, &init, times, &propagator(steps)?)?;
    let distributions = run.distributions()?;
    Ok(Series {
        n0,
        times: times.to_vec(),
        moments: track_com(&distributions, n0)?,
        dispersion: vec![(None, None); times.len()],
        peaks: peaks(&distributions, est)?,
        distributions,
    })
}

fn max_delta(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn convergence(base: &Series, fine: &Series, steps: usize) -> Value {
    let flat =
        |s: &Series| -> Vec<f64> { s.distributions.iter().flat_map(|p| p.probs.iter().copied()).collect() };
    let opt_delta = |f: fn(&Dispersion) -> Option<f64>| {
        let pairs: Vec<(f64, f64)> =
            base.dispersion.iter().zip(&fine.dispersion).filter_map(|(a, b)| Some((f(a)?, f(b)?))).collect();
        (!pairs.is_empty()).then(|| max_delta(pairs.iter().map(|p| p.0), pairs.iter().map(|p| p.1)))
    };
    json!({
        "steps_per_cycle": steps,
        "reference_steps_per_cycle": 2 * steps,
        "max_abs_delta_p": max_delta(flat(base).into_iter(), flat(fine).into_iter()),
        "max_abs_delta_r": max_delta(base.moments.iter().map(|m| m.0), fine.moments.iter().map(|m| m.0)),
        "max_abs_delta_var": max_delta(base.moments.iter().map(|m| m.1), fine.moments.iter().map(|m| m.1)),
        "max_abs_delta_a": opt_delta(|d| d.0),
        "max_abs_delta_b": opt_delta(|d| d.1),
        "max_abs_delta_r_sub": max_delta(
            base.peaks.iter().zip(&fine.peaks).filter_map(|(a, b)| Some((a.as_ref()?.r_sub, b.as_ref()?.r_sub))).map(|p| p.0),
            base.peaks.iter().zip(&fine.peaks).filter_map(|(a, b)| Some((a.as_ref()?.r_sub, b.as_ref()?.r_sub))).map(|p| p.1),
        ),
    })
}

fn conventions() -> Value {
    json!({
        "energy": "model units of the Bloch matrix h(k, t) = [[D, -t1 - t2 e^{-ik}], [-t1 - t2 e^{ik}, -D]]",
        "time": "model units, t = 0 at the start of the cycle",
        "momenta": "k_j = 2 pi j / L folded into [-pi, pi)",
        "position": "u_n = (1/L) sum_k e^{ink} psi_k; P_n sums both sublattices",
        "cells": "n runs over n0 - (L-1)/2 ..= n0 + L/2, periodic in L",
        "covariance": "m_{mu nu}(k) = <c^dag_{k mu} c_{k nu}> = f(h(k))^T",
        "meanfield": "h_mf(k, t) = eta m(k, t)",
        "displacement": "R = <n> - n0 inside a window of L cells that follows the packet; R_sub from the offset-subtracted distribution relative to t = 0",
        "chern": "plaquette Chern number of the lowest band on a 64 x 64 (k, t) grid; quantized transport per cycle equals it",
    })
}

fn gap_json(g: &pumpsim::model::GapReport) -> Value {
    json!({ "value": g.gap, "k": g.k, "cycle_fraction": g.t })
}

fn final_json(s: &Series) -> Value {
    let i = s.times.len() - 1;
    let pk = s.peaks[i].as_ref().expect("last output always has a peak");
    json!({
        "t": s.times[i],
        "R": s.moments[i].0,
        "Var": s.moments[i].1,
        "A": s.dispersion[i].0,
        "B": s.dispersion[i].1,
        "peak": pk.peak_shift,
        "offset": pk.offset,
        "R_sub": pk.r_sub,
        "Var_sub": pk.var_sub,
    })
}

/// Cycles completed at the last output time.
fn cycles_done(config: &RunConfig) -> f64 {
    config.time().cycles as f64
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    eprintln!("warning: {msg}");
    warnings.push(msg);
}

fn base_meta(config: &RunConfig, model: &Model) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "library_version": pumpsim::VERSION,
        "pipeline": config.pipeline,
        "config": config,
        "gap": gap_json(&model.gap),
        "conventions": conventions(),
    })
}

fn merge(meta: &mut Value, extra: Value) {
    if let (Value::Object(m), Value::Object(e)) = (meta, extra) {
        m.extend(e);
    }
}

fn single(ctx: &Context, model: &Model) -> CliResult<()> {
    let config = &ctx.config;
    let time = config.time();
    let tau = model.tau(&time.tau, None)?;
    let system = model.system(tau)?;
    let grid = MomentumGrid::new(config.lattice.cells)?;
    let band = config.switches.band;
    let n0 = config.lattice.n0;
    let est = config.switches.offset_estimator.into();
    let times = time.output_times(tau);
    let series = single_series(&system, &grid, band, n0, &times, time.steps_per_cycle, est)?;
    let conv = if ctx.check_convergence {
        let fine = single_series(&system, &grid, band, n0, &times, 2 * time.steps_per_cycle, est)?;
        convergence(&series, &fine, time.steps_per_cycle)
    } else {
        Value::Null
    };
    let chern = chern_number(&system, band, SCAN_GRID, SCAN_GRID)?;
    let expected = chern as f64 * cycles_done(config);
    let last = series.moments.last().expect("t = 0 is always an output").0;
    let mut meta = base_meta(config, model);
    merge(
        &mut meta,
        json!({
            "resolved": { "tau": tau, "cells": grid.len(), "n0": n0, "band": band, "steps_per_cycle": time.steps_per_cycle, "outputs": times.len() },
            "chern": { "system": chern, "meanfield": Value::Null },
            "gauge_fingerprint": smooth_band(&system, grid, 0.0, band)?.gauge_fingerprint(),
            "offset_estimator": config.switches.offset_estimator,
            "final": final_json(&series),
            "quantization": { "observable": "R", "expected": expected, "error": (last - expected).abs() },
            "convergence": conv,
            "warnings": Vec::<String>::new(),
        }),
    );
    write_series(&ctx.out, &series)?;
    write_meta(&ctx.out, &meta)?;
    println!("single: R = {last:.6} after {} cycle(s), C = {chern}", time.cycles);
    Ok(())
}

pub fn point_dir(out: &Path, t_over_gap: f64) -> PathBuf {
    out.join(format!("t_over_gap_{t_over_gap:?}"))
}

fn sweep_point(ctx: &Context, model: &Model, t_over_gap: f64) -> CliResult<()> {
    let mut config = ctx.config.clone();
    if let Some(th) = config.thermal.as_mut() {
        th.t_over_gap = vec![t_over_gap];
    }
    let time = config.time();
    let full = config.pipeline == Pipeline::Full;
    let tp = model.thermal(t_over_gap)?;
    let eta = model.eta()?;
    let tau = model.tau(&time.tau, Some(&tp))?;
    let system = model.system(tau)?;
    let mf = MeanFieldSampler { system: system.clone(), thermal: tp, eta };
    let mf_gap = model.meanfield_gap(&tp)?;
    let grid = MomentumGrid::new(config.lattice.cells)?;
    let n0 = config.lattice.n0;
    let est: OffsetEstimator = config.switches.offset_estimator.into();
    let times = time.output_times(tau);
    let mut warnings = Vec::new();
    if full && eta * tau < MIN_ETA_TAU {
        warn(
            &mut warnings,
            format!(
                "eta * tau = {:.3} < {MIN_ETA_TAU}: the auxiliary particle is far from adiabatic",
                eta * tau
            ),
        );
    }

    let band_choice: InitialBand = config.switches.initial_band.into();
    let run = |steps: usize| -> CliResult<Series> {
        if full {
            full_series(&system, &tp, eta, band_choice, &grid, n0, &times, steps, est)
        } else {
            single_series(&mf, &grid, config.switches.band, n0, &times, steps, est)
        }
    };
    let series = run(time.steps_per_cycle)?;
    let missing = series.peaks.iter().filter(|p| p.is_none()).count();
    if missing > 0 {
        warn(
            &mut warnings,
            format!("{missing} intermediate output(s) have no peak above the background; their peak columns are empty"),
        );
    }
    let conv = if ctx.check_convergence {
        convergence(&series, &run(2 * time.steps_per_cycle)?, time.steps_per_cycle)
    } else {
        Value::Null
    };

    let mf_band = if full { 0 } else { config.switches.band };
    let c_sys = chern_number(&system, 0, SCAN_GRID, SCAN_GRID)?;
    let c_mf = chern_number(&mf, mf_band, SCAN_GRID, SCAN_GRID)?;
    let fingerprint = match (full, band_choice) {
        (true, InitialBand::SystemLower) => smooth_band(&system, grid, 0.0, 0)?,
        _ => smooth_band(&mf, grid, 0.0, mf_band)?,
    }
    .gauge_fingerprint();
    let expected = c_mf as f64 * cycles_done(&config);
    let last = series.times.len() - 1;
    let (observable, measured) = if full {
        ("R_sub", series.peaks[last].as_ref().expect("last output always has a peak").r_sub)
    } else {
        ("R", series.moments[last].0)
    };

    let mut meta = base_meta(&config, model);
    merge(
        &mut meta,
        json!({
            "resolved": {
                "tau": tau,
                "eta": eta,
                "eta_tau": eta * tau,
                "mu": model.mu,
                "t_over_gap": t_over_gap,
                "temperature": t_over_gap * model.gap.gap,
                "beta": if tp.is_ground_state() { Value::Null } else { json!(tp.beta) },
                "cells": grid.len(),
                "n0": n0,
                "steps_per_cycle": time.steps_per_cycle,
                "outputs": times.len(),
            },
            "meanfield_gap": gap_json(&mf_gap),
            "chern": { "system": c_sys, "meanfield": c_mf },
            "gauge_fingerprint": fingerprint,
            "initial_band": if full { json!(config.switches.initial_band) } else { json!({ "meanfield_band": mf_band }) },
            "offset_estimator": config.switches.offset_estimator,
            "final": final_json(&series),
            "quantization": { "observable": observable, "expected": expected, "error": (measured - expected).abs() },
            "convergence": conv,
            "warnings": warnings,
        }),
    );
    let dir = point_dir(&ctx.out, t_over_gap);
    write_series(&dir, &series)?;
    write_meta(&dir, &meta)?;
    println!(
        "{}: T/gap = {t_over_gap} {observable} = {measured:.6} (C_mf = {c_mf}) -> {}",
        if full { "full" } else { "meanfield" },
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, serde::Serialize)]
struct OracleCase {
    snapshot: f64,
    t_over_gap: f64,
    eta: f64,
    n0: i64,
    initial_band: &'static str,
    deviation: f64,
}

#[allow(clippy::too_many_arguments)]
fn oracle_case(
    model: &Model,
    tau: f64,
    grid: &MomentumGrid,
    times: &[f64],
    cfg: &PropagatorConfig,
    snapshot: f64,
    t_over_gap: f64,
    eta: f64,
    n0: i64,
    band: InitialBand,
) -> CliResult<OracleCase> {
    let frozen = Frozen { inner: model.system(tau)?, at: snapshot * tau };
    let tp = model.thermal(t_over_gap)?;
    let init = initial_aux_field(&frozen, &tp, eta, grid, n0, band)?;
    let oracle = brute_force_rho_aux(&frozen, &tp, eta, &init, times, cfg, None)?;
    let full = run_full(&frozen, &tp, eta, &init, times, cfg)?;
    let mut deviation: f64 = 0.0;
    for (i, reference) in oracle.iter().enumerate() {
        deviation = deviation.max(max_abs(&(&full.rho_at(i)?.rho - &reference.rho)));
    }
    Ok(OracleCase {
        snapshot,
        t_over_gap,
        eta,
        n0,
        initial_band: match band {
            InitialBand::MeanFieldLowest => "meanfield-lowest",
            InitialBand::SystemLower => "system-lower",
        },
        deviation,
    })
}

fn oracle_check(ctx: &Context, model: &Model) -> CliResult<()> {
    let config = &ctx.config;
    let time = config.time();
    let thermal = config.thermal()?;
    let oracle = config.oracle.clone().unwrap_or(crate::config::OracleConfig {
        snapshots: vec![0.0],
        random_cases: 0,
        seed: 0,
    });
    let eta = model.eta()?;
    let grid = MomentumGrid::new(config.lattice.cells)?;
    let cfg = propagator(time.steps_per_cycle)?;
    let band: InitialBand = config.switches.initial_band.into();
    let mut cases = Vec::new();
    for &t_over_gap in &thermal.t_over_gap {
        let tau = model.tau(&time.tau, Some(&model.thermal(t_over_gap)?))?;
        let times = time.output_times(tau);
        for &s in &oracle.snapshots {
            cases.push(oracle_case(
                model,
                tau,
                &grid,
                &times,
                &cfg,
                s,
                t_over_gap,
                eta,
                config.lattice.n0,
                band,
            )?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(oracle.seed);
    let tau = model.tau(&time.tau, Some(&model.thermal(thermal.t_over_gap[0])?))?;
    let times = time.output_times(tau);
    for _ in 0..oracle.random_cases {
        let snapshot = rng.gen_range(0.0..1.0);
        let t_over_gap = rng.gen_range(0.05..2.0);
        let eta = [0.0, 0.0125, 0.075][rng.gen_range(0..3)] * model.gap.gap;
        let n0 = rng.gen_range(0..grid.len() as i64);
        let band = if eta > 0.0 { InitialBand::MeanFieldLowest } else { InitialBand::SystemLower };
        cases.push(oracle_case(model, tau, &grid, &times, &cfg, snapshot, t_over_gap, eta, n0, band)?);
    }
    let worst = cases.iter().map(|c| c.deviation).fold(0.0, f64::max);
    let mut meta = base_meta(config, model);
    merge(
        &mut meta,
        json!({
            "seed": oracle.seed,
            "tolerance": ORACLE_TOL,
            "max_deviation": worst,
            "cases": cases,
        }),
    );
    write_meta(&ctx.out, &meta)?;
    println!("oracle-check: max deviation {worst:.3e} over {} case(s)", cases.len());
    if worst > ORACLE_TOL {
        return Err(CliError::OracleMismatch { deviation: worst, tol: ORACLE_TOL });
    }
    Ok(())
}

/// Chern numbers of the system and, when temperatures are configured, of the
/// mean-field Hamiltonian at each of them.
pub fn chern_report(config: &RunConfig, model: &Model) -> CliResult<Value> {
    let system = model.system(1.0)?;
    let bands: Vec<i64> = (0..system.dim())
        .map(|b| chern_number(&system, b, SCAN_GRID, SCAN_GRID))
        .collect::<pumpsim::Result<_>>()?;
    let mut meanfield = Vec::new();
    if let Some(th) = &config.thermal {
        let eta = model.eta()?;
        for &t_over_gap in &th.t_over_gap {
            let tp = model.thermal(t_over_gap)?;
            let mf = MeanFieldSampler { system: system.clone(), thermal: tp, eta };
            meanfield.push(json!({
                "t_over_gap": t_over_gap,
                "gap": gap_json(&model.meanfield_gap(&tp)?),
                "lowest_band": chern_number(&mf, 0, SCAN_GRID, SCAN_GRID)?,
            }));
        }
    }
    let mut meta = base_meta(config, model);
    merge(&mut meta, json!({ "chern": { "system": bands, "meanfield": meanfield } }));
    Ok(meta)
}

pub fn summary_line(report: &Value) -> String {
    let chern = &report["chern"];
    let mut line = format!("system bands: C = {}", chern["system"]);
    if let Some(list) = chern["meanfield"].as_array() {
        for entry in list {
            line.push_str(&format!(
                "; mean field at T/gap = {}: C = {}",
                entry["t_over_gap"], entry["lowest_band"]
            ));
        }
    }
    line
}
