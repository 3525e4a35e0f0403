//! The eight experiments and the model gates.

use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use ou_coupling::coupling::{coupling_tail_bound, gamma_delta, rw_exact_tail, CouplingSetup, RW_MAX_STEPS};
use ou_coupling::estimate::{
    fit_decay, gradient_sup_norm, tv_exact_1d, tv_histogram_with, Bootstrap, HistogramOptions, TvCurve,
};
use ou_coupling::levy::{
    density_overlap_region, interval_overlap, interval_overlap_exact, shifted_overlap_infimum, svc_set,
    svc_set_exact, truncate, LevyMeasure, PiecewiseDensity,
};
use ou_coupling::rng::RngStream;
use ou_coupling::sampler::{parallel_map, sample_endpoints, DriverMode, EndpointSampler};
use ou_coupling::spectral::{spectral_report, SpectralReport, DEFAULT_CA_GRID, DEFAULT_TIME_HORIZON};
use ou_coupling::symbol::{
    bound_report, check_conditions, finite_symbol_bound, phi_inverse, BoundConstants, ConditionReport, Horizon,
    Lattice, OUModel,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{num, opt_num, ArtifactWriter, Manifest};
use crate::config::{ExperimentConfig, ExperimentKind, NuSpec};
use crate::error::{CliError, CliResult};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 1.0 / 16.0;
pub const DEFAULT_SHIFT_GRID: usize = 201;
const CONDITION_XI_RANGE: f64 = 1e4;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    /// Worker threads for sampling; `0` means available parallelism.
    pub workers: usize,
}

impl RunOptions {
    fn workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Result of the model gates.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCheck {
    pub spectral: SpectralReport,
    pub bounded_semigroup: bool,
    pub epsilon: f64,
    pub delta: f64,
    /// `inf_{|z|≤δ} ν_ε∧(δ_z*ν_ε)` over the shift grid, when computable.
    pub overlap_infimum: Option<f64>,
    pub overlap_certified_lower_bound: Option<f64>,
    pub overlap_note: Option<String>,
    pub symbol_conditions: Option<ConditionReport>,
    pub symbol_note: Option<String>,
    pub passed: bool,
}

fn check_model_with(model: &OUModel, epsilon: f64, delta: f64, grid: usize) -> CliResult<ModelCheck> {
    let spectral = spectral_report(&model.a, DEFAULT_TIME_HORIZON, DEFAULT_CA_GRID)?;
    let bounded = spectral.stability.bounded_semigroup();
    let (mut inf, mut certified, mut overlap_note) = (None, None, None);
    match truncate(&model.triplet.nu, epsilon).and_then(|nu| shifted_overlap_infimum(&nu, delta, grid)) {
        Ok(s) => {
            inf = Some(s.grid_min);
            certified = s.certified_lower_bound;
        }
        Err(e) => overlap_note = Some(format!("not computed: {e}")),
    }
    let (symbol_conditions, symbol_note) = if finite_symbol_bound(model).is_some() {
        (None, Some("bounded symbol: growth condition cannot hold".to_string()))
    } else {
        match check_conditions(model, 1.0, CONDITION_XI_RANGE) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(format!("not computed: {e}"))),
        }
    };
    let passed = bounded && inf.is_none_or(|v| v > 0.0);
    Ok(ModelCheck {
        spectral,
        bounded_semigroup: bounded,
        epsilon,
        delta,
        overlap_infimum: inf,
        overlap_certified_lower_bound: certified,
        overlap_note,
        symbol_conditions,
        symbol_note,
        passed,
    })
}

/// Spectral gate and overlap condition for the configured `(ε, δ)`.
pub fn check_model(cfg: &ExperimentConfig) -> CliResult<ModelCheck> {
    let model = cfg.model()?;
    let p = &cfg.params;
    check_model_with(
        &model,
        p.epsilon.unwrap_or(DEFAULT_EPSILON),
        p.delta.unwrap_or(DEFAULT_DELTA),
        p.shift_grid.unwrap_or(DEFAULT_SHIFT_GRID),
    )
}

/// Applies the overrides and runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> CliResult<Manifest> {
    let mut cfg = cfg.clone();
    if let Some(out) = &opts.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(n) = opts.samples {
        cfg.sample_count = Some(n);
    }
    cfg.validate()?;
    let model = cfg.model()?;
    let mut w = ArtifactWriter::new(&cfg.output_dir, &cfg)?;
    let ctx = Ctx {
        cfg: &cfg,
        model: &model,
        workers: opts.workers(),
    };
    let passed = match cfg.experiment {
        ExperimentKind::TvDecay => tv_decay(&ctx, &mut w)?,
        ExperimentKind::NegativeControl => negative_control(&ctx, &mut w)?,
        ExperimentKind::CouplingTail => coupling_tail(&ctx, &mut w)?,
        ExperimentKind::Lemma23Sweep => lemma23_sweep(&ctx, &mut w)?,
        ExperimentKind::SymbolBounds => symbol_bounds(&ctx, &mut w)?,
        ExperimentKind::GradientScan => gradient_scan(&ctx, &mut w)?,
        ExperimentKind::CantorDemo => cantor_demo(&ctx, &mut w)?,
        ExperimentKind::OverlapCheck => overlap_check(&ctx, &mut w)?,
    };
    w.finish(cfg.experiment.name(), cfg.seed, passed)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a OUModel,
    workers: usize,
}

impl Ctx<'_> {
    fn epsilon(&self) -> f64 {
        self.cfg.params.epsilon.unwrap_or(DEFAULT_EPSILON)
    }

    fn delta(&self) -> f64 {
        self.cfg.params.delta.unwrap_or(DEFAULT_DELTA)
    }

    fn samples(&self) -> usize {
        self.cfg.sample_count.unwrap_or(0)
    }

    fn point(&self, given: &Option<Vec<f64>>, first: f64, at: &str) -> CliResult<DVector<f64>> {
        let n = self.model.n();
        match given {
            Some(v) if v.len() != n => Err(CliError::config(at, format!("expected {n} coordinates"))),
            Some(v) => Ok(DVector::from_vec(v.clone())),
            None => {
                let mut p = DVector::zeros(n);
                p[0] = first;
                Ok(p)
            }
        }
    }

    /// Starting points, `x - y = e_1` unless configured.
    fn start_points(&self) -> CliResult<(DVector<f64>, DVector<f64>)> {
        Ok((
            self.point(&self.cfg.params.x, 0.5, "/params/x")?,
            self.point(&self.cfg.params.y, -0.5, "/params/y")?,
        ))
    }

    fn mode(&self) -> DriverMode {
        if let Some(m) = self.cfg.params.mode {
            return m;
        }
        let t = &self.model.triplet;
        match &t.nu {
            nu if nu.is_zero() && t.has_gaussian_part() => DriverMode::GaussianExact,
            LevyMeasure::SymmetricStable { .. } if !t.has_gaussian_part() => DriverMode::StableExact,
            _ => DriverMode::CpTruncated {
                epsilon: self.epsilon(),
            },
        }
    }
}

/// TV estimates at every grid time, with common random numbers for the two
/// starting points.
fn tv_rows(ctx: &Ctx, w: &mut ArtifactWriter, default_bins: usize, default_quantile: f64) -> CliResult<Vec<(f64, f64, f64)>> {
    let (x, y) = ctx.start_points()?;
    let p = &ctx.cfg.params;
    let mode = ctx.mode();
    let mut opts = HistogramOptions::new(p.bins.unwrap_or(default_bins));
    opts.tail_quantile = p.tail_quantile.unwrap_or(default_quantile);
    let replicates = p.bootstrap_replicates.unwrap_or(100);
    let mut rows = Vec::new();
    for (i, &t) in ctx.cfg.t_grid.iter().enumerate() {
        let tag = u16::try_from(i + 1).map_err(|_| CliError::config("/t_grid", "too many times"))?;
        let sampler = EndpointSampler::new(ctx.model, mode, t)?;
        let xs = sample_endpoints(&sampler, &x, ctx.samples(), ctx.cfg.seed, tag, ctx.workers)?;
        let ys = sample_endpoints(&sampler, &y, ctx.samples(), ctx.cfg.seed, tag, ctx.workers)?;
        if replicates >= 2 {
            opts.bootstrap = Some(Bootstrap {
                replicates,
                seed: ctx.cfg.seed.wrapping_add(0x9e37_79b9 * (i as u64 + 1)),
            });
        }
        let est = tv_histogram_with(&xs, &ys, &opts)?;
        if p.dump_samples.unwrap_or(false) {
            let n = ctx.model.n();
            let mut header = Vec::new();
            for side in ["x", "y"] {
                for k in 0..n {
                    header.push(format!("{side}{k}"));
                }
            }
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let dump: Vec<Vec<String>> = xs
                .iter()
                .zip(&ys)
                .map(|(a, b)| a.iter().chain(b.iter()).map(|v| num(*v)).collect())
                .collect();
            w.csv(&format!("samples_t{i}.csv"), &header_refs, &dump)?;
        }
        rows.push((t, est.tv_hat, est.std_err));
    }
    Ok(rows)
}

fn tv_decay(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let check = check_model_with(ctx.model, ctx.epsilon(), ctx.delta(), ctx.cfg.params.shift_grid.unwrap_or(DEFAULT_SHIFT_GRID))?;
    if !check.bounded_semigroup {
        return Err(CliError::gate(
            "bounded semigroup",
            format!("stability class {:?}: sup_t |e^(tA)| is infinite", check.spectral.stability),
        ));
    }
    if let Some(v) = check.overlap_infimum.filter(|v| *v <= 0.0) {
        return Err(CliError::gate(
            "overlap condition",
            format!(
                "inf over |z| <= {} of the overlap of nu_eps with its shifts is {v} at eps = {}",
                check.delta, check.epsilon
            ),
        ));
    }
    let (x, y) = ctx.start_points()?;
    let default_bins = if ctx.model.n() == 1 { 64 } else { 32 };
    let rows = tv_rows(ctx, w, default_bins, 0.0)?;
    let symbol = check
        .symbol_conditions
        .as_ref()
        .filter(|c| c.growth_holds && c.local_bound_holds);
    let mut points = Vec::new();
    for &(t, tv, se) in &rows {
        let bound = match symbol {
            Some(c) => Some(bound_report(ctx.model, t, &x, &y, c, BoundConstants::default())?.tv_bound),
            None => None,
        };
        points.push((t, tv, se, bound));
    }
    let curve = TvCurve::from_estimates(&points)?;
    let csv: Vec<Vec<String>> = curve
        .rows
        .iter()
        .map(|r| vec![num(r.t), num(r.tv_hat), num(r.std_err), num(r.bound_sqrt), opt_num(r.bound_symbol)])
        .collect();
    w.csv("tv_curve.csv", &["t", "tv_hat", "std_err", "bound_sqrt", "bound_symbol"], &csv)?;

    let mut exact = Vec::new();
    if ctx.model.n() == 1 && finite_symbol_bound(ctx.model).is_none() {
        for &(t, tv, se) in &rows {
            let v = tv_exact_1d(ctx.model, t, x[0], y[0])?;
            exact.push(vec![num(t), num(v), num(tv), num(se)]);
        }
        w.csv("tv_exact.csv", &["t", "tv_exact", "tv_hat", "std_err"], &exact)?;
    }

    let c_hat = curve.c_hat();
    let envelope_holds = curve.rows.iter().all(|r| r.tv_hat <= c_hat / r.t.sqrt() * (1.0 + 1e-12));
    let (fit, fit_error) = match fit_decay(&curve) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = envelope_holds && fit.as_ref().is_some_and(|f| f.slope <= -0.40 && f.r_squared >= 0.9);
    w.json(
        "summary.json",
        &json!({
            "experiment": "tv_decay",
            "mode": ctx.mode(),
            "gates": check,
            "fit": fit,
            "fit_error": fit_error,
            "c_hat": c_hat,
            "envelope_holds": envelope_holds,
            "passed": passed,
        }),
    )?;
    Ok(Some(passed))
}

fn negative_control(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let spectral = spectral_report(&ctx.model.a, DEFAULT_TIME_HORIZON, DEFAULT_CA_GRID)?;
    let rows = tv_rows(ctx, w, 1024, 0.01)?;
    let csv: Vec<Vec<String>> = rows.iter().map(|&(t, v, se)| vec![num(t), num(v), num(se)]).collect();
    w.csv("tv_curve.csv", &["t", "tv_hat", "std_err"], &csv)?;
    let floor = 0.5;
    let min_tv = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let passed = min_tv >= floor;
    w.json(
        "summary.json",
        &json!({
            "experiment": "negative_control",
            "mode": ctx.mode(),
            "stability": spectral.stability,
            "bounded_semigroup": spectral.stability.bounded_semigroup(),
            "min_tv_hat": min_tv,
            "floor": floor,
            "passed": passed,
        }),
    )?;
    Ok(Some(passed))
}

/// Least-squares slope of `log y` against `log x`.
fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn coupling_tail(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let p = &ctx.cfg.params;
    let setup = CouplingSetup::new(ctx.model, ctx.epsilon())?;
    let delta = ctx.delta();
    let admissible = setup.admissible_distance(delta);
    let x = ctx.point(&p.x, admissible, "/params/x")?;
    let y = ctx.point(&p.y, 0.0, "/params/y")?;
    let distance = (&x - &y).norm();
    if distance > admissible * (1.0 + 1e-12) {
        return Err(CliError::gate(
            "coupling distance",
            format!("|x - y| = {distance} exceeds delta / (C_A |B_bar|) = {admissible}"),
        ));
    }
    let grid = p.shift_grid.unwrap_or(DEFAULT_SHIFT_GRID);
    let gamma = gamma_delta(setup.nu_bar(), delta, grid)?;
    if !(gamma > 0.0) {
        return Err(CliError::gate("overlap condition", format!("gamma(delta) = {gamma} at delta = {delta}")));
    }
    let horizon = p.horizon.unwrap_or(50.0);
    let steps = p.steps.unwrap_or(128);
    let runs = ctx.samples();
    let seed = ctx.cfg.seed;
    let outcomes = parallel_map(runs, ctx.workers, |i| {
        let mut rng = RngStream::for_item(seed, 2, i as u64);
        let run = if steps == 0 {
            setup.run(horizon, &x, &y, &mut rng)?
        } else {
            setup.run_with_steps(horizon, &x, &y, steps, &mut rng)?
        };
        let min_move = run.stay_probs.iter().map(|p| 1.0 - p).fold(1.0, f64::min);
        Ok((run.jump_count(), run.coupling_step, run.gap, min_move))
    })?;
    let csv: Vec<Vec<String>> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| vec![i.to_string(), o.0.to_string(), o.1.map_or(String::new(), |k| k.to_string()), num(o.2)])
        .collect();
    w.csv("runs.csv", &["run_id", "jump_count", "coupling_step", "gap"], &csv)?;

    let tail = |k: usize| outcomes.iter().filter(|o| o.1.is_none_or(|s| s > k)).count() as f64 / runs as f64;
    let k_grid = p.k_grid.clone().unwrap_or_else(|| vec![4, 8, 16, 32, 64, 128]);
    let fit_k = p.fit_k.unwrap_or(k_grid[0]);
    if fit_k == 0 || k_grid.contains(&0) {
        return Err(CliError::config("/params/k_grid", "k must be positive"));
    }
    let c_clt = (fit_k as f64).sqrt() * tail(fit_k);
    let mut rows = Vec::new();
    let mut all_within = true;
    let mut points = Vec::new();
    for &k in &k_grid {
        let emp = tail(k);
        let env = coupling_tail_bound(gamma, k, c_clt)?;
        let within = emp <= env;
        if k != fit_k {
            all_within &= within;
        }
        points.push((k as f64, emp));
        rows.push(vec![k.to_string(), num(emp), num(env), within.to_string()]);
    }
    w.csv("tail.csv", &["k", "tail", "envelope", "within"], &rows)?;
    let slope = log_slope(&points);
    let slope_ok = slope.is_some_and(|s| (-0.65..=-0.40).contains(&s));
    let min_move = outcomes.iter().map(|o| o.3).fold(1.0, f64::min);
    let passed = all_within && slope_ok;
    w.json(
        "summary.json",
        &json!({
            "experiment": "coupling_tail",
            "epsilon": ctx.epsilon(),
            "delta": delta,
            "gamma": gamma,
            "c_a": setup.c_a(),
            "b_bar_norm": setup.b_bar_norm(),
            "admissible_distance": admissible,
            "distance": distance,
            "horizon": horizon,
            "conditioned_steps": if steps == 0 { Value::Null } else { json!(steps) },
            "runs": runs,
            "fit_k": fit_k,
            "c_clt": c_clt,
            "tail_slope": slope,
            "min_move_probability": min_move,
            "all_within": all_within,
            "passed": passed,
        }),
    )?;
    Ok(Some(passed))
}

/// Exhaustive check of the reflection inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub kmax: usize,
    pub cases: usize,
    pub violations: usize,
}

pub fn lemma23_rows(kmax: usize, r_values: &[String]) -> CliResult<(Vec<Vec<String>>, SweepSummary)> {
    if kmax == 0 || kmax > RW_MAX_STEPS {
        return Err(CliError::config("/params/kmax", format!("kmax must lie in 1..={RW_MAX_STEPS}")));
    }
    let mut rs = Vec::new();
    for (i, s) in r_values.iter().enumerate() {
        let r = BigRational::from_str(s.trim())
            .map_err(|_| CliError::config(format!("/params/r_values/{i}"), format!("not a rational: {s}")))?;
        rs.push((s.trim().to_string(), r));
    }
    let f = |q: &BigRational| num(q.to_f64().unwrap_or(f64::NAN));
    let mut rows = Vec::new();
    let mut violations = 0;
    for k in 1..=kmax {
        for a in 1..=k {
            for (label, r) in &rs {
                let tail = rw_exact_tail(k, r, a)?;
                let ok = tail.inequalities();
                violations += ok.iter().filter(|b| !**b).count();
                let mut row = vec![k.to_string(), a.to_string(), label.clone()];
                for q in [
                    &tail.p_max_ge,
                    &tail.p_end_ge,
                    &tail.p_end_gt,
                    &tail.p_max_lt,
                    &tail.p_mid_closed,
                    &tail.p_mid_open,
                ] {
                    row.push(f(q));
                }
                row.extend(ok.iter().map(|b| b.to_string()));
                rows.push(row);
            }
        }
    }
    let cases = rows.len();
    Ok((rows, SweepSummary { kmax, cases, violations }))
}

pub const LEMMA23_HEADER: [&str; 13] = [
    "k",
    "a",
    "r",
    "p_max_ge",
    "p_end_ge",
    "p_end_gt",
    "p_max_lt",
    "p_mid_closed",
    "p_mid_open",
    "upper_tail_lower",
    "upper_tail_upper",
    "max_below_lower",
    "max_below_upper",
];

pub fn default_r_values() -> Vec<String> {
    vec!["0".into(), "3/10".into(), "3/5".into()]
}

fn lemma23_sweep(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let p = &ctx.cfg.params;
    let (rows, summary) = lemma23_rows(p.kmax.unwrap_or(12), &p.r_values.clone().unwrap_or_else(default_r_values))?;
    w.csv("lemma23.csv", &LEMMA23_HEADER, &rows)?;
    let passed = summary.violations == 0;
    w.json("summary.json", &json!({"experiment": "lemma23_sweep", "sweep": summary, "passed": passed}))?;
    Ok(Some(passed))
}

/// `φ_t^{-1}(1)` in closed form for a scalar model with a symmetric stable driver.
pub fn stable_phi_inverse(model: &OUModel, t: f64) -> Option<f64> {
    if model.n() != 1 || model.d() != 1 || model.triplet.has_gaussian_part() {
        return None;
    }
    let LevyMeasure::SymmetricStable { alpha, scale, .. } = model.triplet.nu else {
        return None;
    };
    if model.triplet.drift[0] != 0.0 {
        return None;
    }
    let a = model.a[(0, 0)];
    let b = model.b[(0, 0)].abs();
    let integral = if a == 0.0 {
        t
    } else {
        ((alpha * a * t).exp() - 1.0) / (alpha * a)
    };
    Some((1.0 / (scale * b.powf(alpha) * integral)).powf(1.0 / alpha))
}

fn symbol_bounds(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let (x, y) = ctx.start_points()?;
    let t0 = ctx.cfg.t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let conditions = match check_conditions(ctx.model, t0, CONDITION_XI_RANGE) {
        Ok(c) => Some(c),
        Err(e) if e.is_numerical() => return Err(e.into()),
        Err(_) => None,
    };
    let mut rows = Vec::new();
    let mut max_rel: Option<f64> = None;
    for &t in &ctx.cfg.t_grid {
        let inv = phi_inverse(ctx.model, Horizon::Finite(t), 1.0)?;
        let closed = stable_phi_inverse(ctx.model, t);
        let rel = closed.map(|c| (inv - c).abs() / c);
        if let Some(r) = rel {
            max_rel = Some(max_rel.map_or(r, |m: f64| m.max(r)));
        }
        let report = match &conditions {
            Some(c) => Some(bound_report(ctx.model, t, &x, &y, c, BoundConstants::default())?),
            None => None,
        };
        rows.push(vec![
            num(t),
            num(inv),
            opt_num(closed),
            opt_num(rel),
            opt_num(report.as_ref().map(|r| r.tv_bound)),
            opt_num(report.as_ref().map(|r| r.gradient_bound_small_t)),
            opt_num(report.as_ref().map(|r| r.gradient_bound_large_t)),
        ]);
    }
    w.csv(
        "symbol_bounds.csv",
        &[
            "t",
            "phi_t_inverse",
            "closed_form",
            "rel_err",
            "tv_bound",
            "gradient_bound_small_t",
            "gradient_bound_large_t",
        ],
        &rows,
    )?;
    let passed = max_rel.map(|m| m <= 1e-6);
    w.json(
        "summary.json",
        &json!({
            "experiment": "symbol_bounds",
            "conditions": conditions,
            "max_rel_err": max_rel,
            "passed": passed,
        }),
    )?;
    Ok(passed)
}

/// `sup |∇P_t 1_{z_1 ≥ 0}|` per grid time with probes scaled to `1/φ_t^{-1}(1)`.
pub fn gradient_rows(model: &OUModel, t_grid: &[f64], probe_points: usize, fraction: f64) -> CliResult<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for &t in t_grid {
        let scale = 1.0 / phi_inverse(model, Horizon::Finite(t), 1.0)?;
        let probes = Lattice::new(model.n(), fraction * scale, probe_points)?;
        let r = gradient_sup_norm(model, t, |z| if z[0] >= 0.0 { 1.0 } else { 0.0 }, &probes)?;
        out.push((t, r.sup_norm, r.step));
    }
    Ok(out)
}

fn gradient_scan(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let p = &ctx.cfg.params;
    let rows = gradient_rows(
        ctx.model,
        &ctx.cfg.t_grid,
        p.probe_points.unwrap_or(25),
        p.probe_fraction.unwrap_or(0.02),
    )?;
    let expected = match ctx.model.triplet.nu {
        LevyMeasure::SymmetricStable { alpha, .. } if ctx.model.n() == 1 => Some(2f64.powf(1.0 / alpha)),
        _ => None,
    };
    let mut ratios = Vec::new();
    let mut csv = Vec::new();
    for &(t, g, h) in &rows {
        let half = rows.iter().find(|r| (r.0 - t / 2.0).abs() <= 1e-12 * t);
        let ratio = half.map(|r| r.1 / g);
        if let Some(q) = ratio {
            ratios.push(json!({"t": t, "ratio": q}));
        }
        csv.push(vec![num(t), num(g), num(h), opt_num(ratio)]);
    }
    w.csv("gradient.csv", &["t", "sup_norm", "step", "ratio_half_to_t"], &csv)?;
    let passed = expected.map(|e| {
        rows.iter().all(|&(t, g, _)| {
            rows.iter()
                .find(|r| (r.0 - t / 2.0).abs() <= 1e-12 * t)
                .is_none_or(|r| ((r.1 / g) / e - 1.0).abs() <= 0.15)
        })
    });
    w.json(
        "summary.json",
        &json!({
            "experiment": "gradient_scan",
            "expected_ratio": expected,
            "ratios": ratios,
            "passed": passed,
        }),
    )?;
    Ok(passed)
}

/// Minimum of the interval overlap over the symmetric grid `|z| ≤ zmax`,
/// in floating point and in exact arithmetic.
#[derive(Debug, Clone, Serialize)]
pub struct CantorOverlap {
    pub level: u32,
    pub removed: f64,
    pub min_float: f64,
    pub min_exact: String,
    pub min_exact_value: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

pub fn cantor_overlap(level: u32, removed: f64, zmax: f64, grid: usize) -> CliResult<CantorOverlap> {
    if grid < 2 || !(zmax > 0.0) {
        return Err(CliError::config("/params/shift_grid", "need at least 2 shifts and zmax > 0"));
    }
    let removed_exact =
        BigRational::from_float(removed).ok_or_else(|| CliError::config("/params/removed", "must be finite"))?;
    let zmax_exact = BigRational::from_float(zmax).ok_or_else(|| CliError::config("/params/zmax", "must be finite"))?;
    let float_set = svc_set(level, removed)?;
    let exact_set = svc_set_exact(level, &removed_exact)?;
    let quarter = BigRational::new(1.into(), 4.into());
    let mut rows = Vec::new();
    let mut min_float = f64::INFINITY;
    let mut min_exact: Option<BigRational> = None;
    let m = (grid - 1) as i64;
    for j in 0..grid as i64 {
        let z_exact = &zmax_exact * BigRational::new((2 * j - m).into(), m.into());
        let z = z_exact.to_f64().unwrap_or(f64::NAN);
        let v = interval_overlap(&float_set, z);
        let e = interval_overlap_exact(&exact_set, &z_exact);
        min_float = min_float.min(v);
        rows.push(vec![num(z), num(v), num(e.to_f64().unwrap_or(f64::NAN)), (e >= quarter).to_string()]);
        if min_exact.as_ref().is_none_or(|cur| &e < cur) {
            min_exact = Some(e);
        }
    }
    let min_exact = min_exact.expect("grid is nonempty");
    Ok(CantorOverlap {
        level,
        removed,
        min_float,
        min_exact: min_exact.to_string(),
        min_exact_value: min_exact.to_f64().unwrap_or(f64::NAN),
        threshold: 0.25,
        passed: min_exact >= quarter,
        rows,
    })
}

fn cantor_demo(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let p = &ctx.cfg.params;
    let (model_level, model_removed) = match &ctx.cfg.model.nu {
        NuSpec::Svc { level, removed, .. } => (Some(*level), Some(*removed)),
        _ => (None, None),
    };
    let level = p.level.or(model_level).unwrap_or(10);
    let removed = p.removed.or(model_removed).unwrap_or(0.25);
    let res = cantor_overlap(level, removed, p.zmax.unwrap_or(0.1), p.shift_grid.unwrap_or(DEFAULT_SHIFT_GRID))?;
    w.csv("overlap.csv", &["z", "overlap", "overlap_exact", "at_least_quarter"], &res.rows)?;
    w.json("summary.json", &json!({"experiment": "cantor_demo", "result": res, "passed": res.passed}))?;
    Ok(Some(res.passed))
}

/// Independent midpoint evaluation of `∫_F min(ρ(z), ρ(z - x)) dz`.
fn brute_overlap(rho: &PiecewiseDensity, region: &[(f64, f64)], x: f64, cells: usize) -> f64 {
    let mut total = 0.0;
    for &(a, b) in region {
        let h = (b - a) / cells as f64;
        let mut s = 0.0;
        for i in 0..cells {
            let z = a + (i as f64 + 0.5) * h;
            s += rho.eval(z).min(rho.eval(z - x));
        }
        total += s * h;
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapCheck {
    pub region: Vec<(f64, f64)>,
    pub delta: f64,
    pub k_mass: f64,
    pub lower_bound: f64,
    pub k_over_8: f64,
    pub inf_overlap: f64,
    pub brute_k: f64,
    pub brute_min: f64,
    pub passed: bool,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

pub fn overlap_check_for(rho: &PiecewiseDensity, z0: f64, epsilon: f64, grid: usize) -> CliResult<OverlapCheck> {
    let region = density_overlap_region(rho, z0, epsilon, grid)?;
    let intervals = region.region.intervals().to_vec();
    let cells = 200_000;
    let brute_k = brute_overlap(rho, &intervals, 0.0, cells);
    let m = (grid.max(2) - 1) as f64;
    let mut rows = Vec::new();
    let mut brute_min = f64::INFINITY;
    for j in 0..grid.max(2) {
        let x = region.delta * (2.0 * j as f64 / m - 1.0);
        let v = brute_overlap(rho, &intervals, x, cells);
        brute_min = brute_min.min(v);
        rows.push(vec![num(x), num(v)]);
    }
    let k_over_8 = region.k_mass / 8.0;
    Ok(OverlapCheck {
        passed: region.lower_bound >= k_over_8 && brute_min >= k_over_8,
        region: intervals,
        delta: region.delta,
        k_mass: region.k_mass,
        lower_bound: region.lower_bound,
        k_over_8,
        inf_overlap: region.inf_overlap,
        brute_k,
        brute_min,
        rows,
    })
}

fn overlap_check(ctx: &Ctx, w: &mut ArtifactWriter) -> CliResult<Option<bool>> {
    let LevyMeasure::Density(rho) = &ctx.model.triplet.nu else {
        return Err(CliError::config("/model/nu", "overlap_check needs a one-dimensional density"));
    };
    let (lo, hi) = rho
        .support
        .bounds()
        .ok_or_else(|| CliError::config("/model/nu", "empty support"))?;
    let p = &ctx.cfg.params;
    let res = overlap_check_for(
        rho,
        p.z0.unwrap_or(0.5 * (lo + hi)),
        p.region_epsilon.unwrap_or(0.5 * (hi - lo)),
        p.shift_grid.unwrap_or(DEFAULT_SHIFT_GRID),
    )?;
    w.csv("overlap.csv", &["shift", "overlap_brute"], &res.rows)?;
    w.json("summary.json", &json!({"experiment": "overlap_check", "result": res, "passed": res.passed}))?;
    Ok(Some(res.passed))
}
