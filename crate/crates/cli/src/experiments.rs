//! Case-study experiments and their CSV/SVG outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context as _, Result};
use heston_hjb::hjb::{solve_fixed_with, solve_hjb_with};
use heston_hjb::{
    assemble, heston_cf_call, mc_price, ControlInterval, CoordinateMap, DiscreteOperator, Extremum, HestonParams,
    McConfig, Mesh, Payoff, PayoffKind, PointQuote, PricedSurface, SolverConfig, SurfaceSampler, ValueSurface,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::svg::{heatmap_from_csv, HeatmapSpec};

/// Mesh and model shared by every leg of a run.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub params: HestonParams,
    pub map: CoordinateMap,
    pub mesh: Mesh,
    pub solver: SolverConfig,
}

/// Upper and lower value envelopes over one control set.
pub struct Envelopes {
    pub sup: ValueSurface,
    pub inf: ValueSurface,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.check()?;
        Ok(Context {
            cfg: cfg.clone(),
            params: cfg.params(),
            map: cfg.coordinate_map()?,
            mesh: cfg.mesh()?,
            solver: cfg.solver(),
        })
    }

    pub fn operator(&self, payoff: &Payoff, stabilization: &ControlInterval) -> Result<DiscreteOperator> {
        Ok(assemble(&self.mesh, &self.params, payoff, &self.map, stabilization)?)
    }

    /// Solves both modes concurrently on a shared operator.
    pub fn envelopes(&self, op: &DiscreteOperator, control: &ControlInterval) -> Result<Envelopes> {
        let (sup, inf) = rayon::join(
            || solve_hjb_with(op, control, Extremum::Sup, &self.solver),
            || solve_hjb_with(op, control, Extremum::Inf, &self.solver),
        );
        Ok(Envelopes { sup: sup?, inf: inf? })
    }

    pub fn fixed(&self, op: &DiscreteOperator, lambda: f64) -> Result<ValueSurface> {
        Ok(solve_fixed_with(op, lambda, &self.solver)?)
    }

    pub fn sampler(&self) -> SurfaceSampler<'_> {
        SurfaceSampler::new(&self.mesh)
    }

    pub fn sample(&self, surface: &ValueSurface, t: f64) -> Result<PricedSurface> {
        Ok(self.sampler().sample_grid(surface, t, self.cfg.sample_n_s, self.cfg.sample_n_v)?)
    }

    /// Nearest time level of the solver grid.
    pub fn grid_time(&self, t: f64) -> f64 {
        let n = self.solver.steps as f64;
        (t / self.params.maturity * n).round() / n * self.params.maturity
    }
}

/// `max_i (sup_i - inf_i)`.
pub fn max_spread(sup: &[f64], inf: &[f64]) -> f64 {
    sup.iter().zip(inf).map(|(a, b)| a - b).fold(0.0, f64::max)
}

/// `max_i (sup_i - inf_i) / max_i sup_i`.
pub fn relative_spread(sup: &[f64], inf: &[f64]) -> f64 {
    let top = sup.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        max_spread(sup, inf) / top
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceRow {
    #[serde(rename = "S")]
    pub s: f64,
    pub v: f64,
    pub t: f64,
    pub value_sup: f64,
    pub value_inf: f64,
    pub delta_sup: f64,
    pub delta_inf: f64,
    pub control_sup: f64,
    pub control_inf: f64,
}

pub fn surface_rows(ctx: &Context, env: &Envelopes, times: &[f64]) -> Result<Vec<SurfaceRow>> {
    let mut rows = Vec::new();
    for &t in times {
        let (hi, lo) = (ctx.sample(&env.sup, t)?, ctx.sample(&env.inf, t)?);
        rows.extend(hi.points.iter().zip(&lo.points).map(|(a, b)| SurfaceRow {
            s: a.s,
            v: a.v,
            t,
            value_sup: a.value,
            value_inf: b.value,
            delta_sup: a.delta,
            delta_inf: b.delta,
            control_sup: a.control,
            control_inf: b.control,
        }));
    }
    Ok(rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Files and summary numbers produced by one experiment.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub metrics: Map<String, Value>,
}

impl RunOutput {
    fn csv<T: Serialize>(&mut self, dir: &Path, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = dir.join(name);
        write_csv(&path, rows)?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn svg(&mut self, csv: &Path, dir: &Path, name: &str, spec: HeatmapSpec<'_>) -> Result<()> {
        let path = dir.join(name);
        heatmap_from_csv(csv, &spec, &path)?;
        self.files.push(path);
        Ok(())
    }

    fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.into(), value.into());
    }
}

fn nodal_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn heat<'a>(value: &'a str, t: f64, title: &'a str) -> HeatmapSpec<'a> {
    HeatmapSpec {
        x: "S",
        y: "v",
        value,
        filter: Some(("t", t)),
        title,
    }
}

pub fn run_value_surface(ctx: &Context, dir: &Path) -> Result<RunOutput> {
    let control = ctx.cfg.control();
    let op = ctx.operator(&ctx.cfg.payoff()?, &control)?;
    let env = ctx.envelopes(&op, &control)?;
    let mut out = RunOutput::default();
    let rows = surface_rows(ctx, &env, &[0.0, ctx.params.maturity])?;
    let csv = out.csv(dir, "surface.csv", &rows)?;
    out.svg(&csv, dir, "value_sup.svg", heat("value_sup", 0.0, "V_sup at t = 0"))?;
    out.svg(&csv, dir, "value_inf.svg", heat("value_inf", 0.0, "V_inf at t = 0"))?;
    let (lo, _) = nodal_range(env.inf.initial());
    let (_, hi) = nodal_range(env.sup.initial());
    out.metric("min_value_t0", lo);
    out.metric("max_value_t0", hi);
    out.metric("relative_spread_t0", relative_spread(env.sup.initial(), env.inf.initial()));
    Ok(out)
}

pub fn run_control_map(ctx: &Context, dir: &Path) -> Result<RunOutput> {
    let control = ctx.cfg.control();
    let op = ctx.operator(&ctx.cfg.payoff()?, &control)?;
    let env = ctx.envelopes(&op, &control)?;
    let t = ctx.grid_time(ctx.cfg.compare_time);
    let mut out = RunOutput::default();
    let rows = surface_rows(ctx, &env, &[0.0, t])?;
    let csv = out.csv(dir, "surface.csv", &rows)?;
    out.svg(&csv, dir, "control_sup.svg", heat("control_sup", 0.0, "sup control at t = 0"))?;
    out.svg(&csv, dir, "control_inf.svg", heat("control_inf", 0.0, "inf control at t = 0"))?;
    let points = control.points();
    let extreme = [control.lambda_min, control.lambda_max];
    let all: Vec<f64> = env.sup.controls().iter().chain(env.inf.controls()).flatten().copied().collect();
    let share = all.iter().filter(|l| extreme.contains(l)).count() as f64 / all.len() as f64;
    out.metric("control_points", points.len());
    out.metric("bang_bang_share", share);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DifferenceRow {
    #[serde(rename = "S")]
    pub s: f64,
    pub v: f64,
    pub t: f64,
    pub value_sup: f64,
    pub value_fixed: f64,
    pub difference: f64,
}

pub fn run_linear_compare(ctx: &Context, dir: &Path) -> Result<RunOutput> {
    let control = ctx.cfg.control();
    let lambda = ctx.cfg.lambda_fixed.unwrap_or(control.lambda_min);
    let op = ctx.operator(&ctx.cfg.payoff()?, &control)?;
    let (sup, fixed) = rayon::join(
        || solve_hjb_with(&op, &control, Extremum::Sup, &ctx.solver),
        || solve_fixed_with(&op, lambda, &ctx.solver),
    );
    let (sup, fixed) = (sup?, fixed?);
    let t = ctx.grid_time(ctx.cfg.compare_time);
    let (a, b) = (ctx.sample(&sup, t)?, ctx.sample(&fixed, t)?);
    let rows: Vec<DifferenceRow> = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| DifferenceRow {
            s: p.s,
            v: p.v,
            t,
            value_sup: p.value,
            value_fixed: q.value,
            difference: p.value - q.value,
        })
        .collect();
    let mut out = RunOutput::default();
    let csv = out.csv(dir, "linear_compare.csv", &rows)?;
    out.svg(&csv, dir, "difference.svg", heat("difference", t, "V_sup - V_fixed"))?;
    let diff: Vec<f64> = sup.at_time(t)?.iter().zip(fixed.at_time(t)?).map(|(x, y)| x - y).collect();
    let (lo, hi) = nodal_range(&diff);
    out.metric("lambda_fixed", lambda);
    out.metric("compare_time", t);
    out.metric("min_difference", lo);
    out.metric("max_difference", hi);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub diameter: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub v: f64,
    pub value_sup: f64,
    pub value_inf: f64,
    pub delta_sup: f64,
    pub delta_inf: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpreadRow {
    pub diameter: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub max_spread: f64,
    pub relative_spread: f64,
}

/// One control set of the sweep, reduced to what is reported.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub control: ControlInterval,
    pub quotes: Vec<(PointQuote, PointQuote)>,
    pub spread: SpreadRow,
    /// Nodal `V_sup - V_inf` at `t = 0`.
    pub nodal_spread: Vec<f64>,
}

/// Symmetric control sets around `center`, all assembled with the
/// stabilization of the widest one.
pub fn interval_sweep(ctx: &Context, payoff: &Payoff, center: f64, diameters: &[f64]) -> Result<Vec<SweepEntry>> {
    use rayon::prelude::*;
    let widest = diameters.iter().copied().fold(0.0, f64::max);
    let op = ctx.operator(payoff, &ControlInterval::centered(center, widest))?;
    let points: Vec<(f64, f64)> = ctx.cfg.query_points.iter().map(|q| (q[0], q[1])).collect();
    diameters
        .par_iter()
        .map(|&d| {
            let control = ControlInterval::centered(center, d).with_points(ctx.cfg.n_points);
            let env = ctx.envelopes(&op, &control)?;
            let sampler = ctx.sampler();
            let hi = sampler.query_many(&env.sup, &points, 0.0)?;
            let lo = sampler.query_many(&env.inf, &points, 0.0)?;
            let (sup, inf) = (env.sup.initial(), env.inf.initial());
            Ok(SweepEntry {
                control,
                quotes: hi.into_iter().zip(lo).collect(),
                spread: SpreadRow {
                    diameter: d,
                    lambda_min: control.lambda_min,
                    lambda_max: control.lambda_max,
                    max_spread: max_spread(sup, inf),
                    relative_spread: relative_spread(sup, inf),
                },
                nodal_spread: sup.iter().zip(inf).map(|(a, b)| a - b).collect(),
            })
        })
        .collect()
}

pub fn run_interval_sweep(ctx: &Context, dir: &Path) -> Result<RunOutput> {
    let entries = interval_sweep(ctx, &ctx.cfg.payoff()?, ctx.cfg.sweep_center, &ctx.cfg.sweep_diameters)?;
    let mut sweep = Vec::new();
    for e in &entries {
        for (a, b) in &e.quotes {
            sweep.push(SweepRow {
                diameter: e.spread.diameter,
                lambda_min: e.control.lambda_min,
                lambda_max: e.control.lambda_max,
                s: a.s,
                v: a.v,
                value_sup: a.value,
                value_inf: b.value,
                delta_sup: a.delta,
                delta_inf: b.delta,
            });
        }
    }
    let spreads: Vec<SpreadRow> = entries.iter().map(|e| e.spread).collect();
    let mut out = RunOutput::default();
    out.csv(dir, "sweep.csv", &sweep)?;
    out.csv(dir, "spread.csv", &spreads)?;
    let nested = entries
        .windows(2)
        .all(|w| w[0].nodal_spread.iter().zip(&w[1].nodal_spread).all(|(a, b)| *b >= a - 1e-10));
    out.metric("spreads_nested", nested);
    out.metric("relative_spreads", spreads.iter().map(|s| s.relative_spread).collect::<Vec<_>>());
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaRow {
    #[serde(rename = "S")]
    pub s: f64,
    pub v: f64,
    pub t: f64,
    pub delta_sup: f64,
    pub delta_inf: f64,
    pub delta_diff: f64,
}

/// `delta_sup - delta_inf` on the sampling grid at `t = 0`.
pub fn delta_map(ctx: &Context, payoff: &Payoff, control: &ControlInterval) -> Result<Vec<DeltaRow>> {
    let op = ctx.operator(payoff, control)?;
    let env = ctx.envelopes(&op, control)?;
    let (hi, lo) = (ctx.sample(&env.sup, 0.0)?, ctx.sample(&env.inf, 0.0)?);
    Ok(hi
        .points
        .iter()
        .zip(&lo.points)
        .map(|(a, b)| DeltaRow {
            s: a.s,
            v: a.v,
            t: 0.0,
            delta_sup: a.delta,
            delta_inf: b.delta,
            delta_diff: a.delta - b.delta,
        })
        .collect())
}

/// Largest `|delta_diff|` and where it occurs.
pub fn delta_peak(rows: &[DeltaRow]) -> Option<&DeltaRow> {
    rows.iter().max_by(|a, b| a.delta_diff.abs().total_cmp(&b.delta_diff.abs()))
}

/// Call and butterfly with the configured strike; the butterfly half-width
/// defaults to `0.4 K` when the configured payoff has none.
pub fn delta_payoffs(cfg: &ExperimentConfig) -> Result<[Payoff; 2]> {
    let k = cfg.payoff.strike;
    let a = if cfg.payoff.a > 0.0 { cfg.payoff.a } else { 0.4 * k };
    Ok([Payoff::call(k)?, Payoff::butterfly(k, a)?])
}

pub fn run_delta_map(ctx: &Context, dir: &Path) -> Result<RunOutput> {
    let control = ctx.cfg.control();
    let mut out = RunOutput::default();
    for payoff in delta_payoffs(&ctx.cfg)? {
        let name = payoff.kind().name();
        let rows = delta_map(ctx, &payoff, &control)?;
        let csv = out.csv(dir, &format!("delta_map_{name}.csv"), &rows)?;
        let title = format!("delta_sup - delta_inf ({name})");
        out.svg(&csv, dir, &format!("delta_map_{name}.svg"), heat("delta_diff", 0.0, &title))?;
        if let Some(p) = delta_peak(&rows) {
            out.metric(&format!("{name}_max_abs_delta_diff"), p.delta_diff.abs());
            out.metric(&format!("{name}_argmax"), json!([p.s, p.v]));
        }
    }
    Ok(out)
}

fn mesh_stats(mesh: &Mesh) -> Value {
    json!({
        "nodes": mesh.n_nodes(),
        "triangles": mesh.n_triangles(),
        "refinement_level": mesh.refinement_level(),
        "mesh_size": mesh.mesh_size(),
        "min_angle_deg": mesh.min_angle().to_degrees(),
        "max_angle_deg": mesh.max_angle().to_degrees(),
    })
}

/// Runs the configured experiment into `dir` and writes `manifest.json`.
pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput> {
    let start = Instant::now();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ctx = Context::new(cfg)?;
    let mut out = match cfg.experiment {
        Experiment::ValueSurface => run_value_surface(&ctx, dir)?,
        Experiment::ControlMap => run_control_map(&ctx, dir)?,
        Experiment::LinearCompare => run_linear_compare(&ctx, dir)?,
        Experiment::IntervalSweep => run_interval_sweep(&ctx, dir)?,
        Experiment::DeltaMap => run_delta_map(&ctx, dir)?,
    };
    let files: Vec<String> = out
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "config": cfg,
        "solver": {
            "steps": ctx.solver.steps,
            "dt": ctx.params.maturity / ctx.solver.steps as f64,
            "howard_tol": ctx.solver.howard_tol,
            "max_howard": ctx.solver.max_howard,
            "linear_tol": ctx.solver.linear_tol,
        },
        "mesh": mesh_stats(&ctx.mesh),
        "files": files,
        "metrics": out.metrics,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    out.files.push(path);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub lambda: f64,
    #[serde(rename = "S")]
    pub s: f64,
    pub v: f64,
    pub pde: f64,
    pub mc: f64,
    pub mc_std_error: f64,
    pub mc_paths: usize,
    /// Characteristic-function price; only for calls with `λ = 0`.
    pub cf: Option<f64>,
}

/// Prices the configured payoff at `t = 0` with a fixed control three ways.
pub fn oracle_report(cfg: &ExperimentConfig, lambda: f64, s: f64, v: f64, mc: &McConfig) -> Result<OracleReport> {
    let ctx = Context::new(cfg)?;
    let payoff = cfg.payoff()?;
    let op = ctx.operator(&payoff, &ControlInterval::singleton(lambda))?;
    let surface = ctx.fixed(&op, lambda)?;
    let pde = ctx.sampler().query(&surface, s, v, 0.0)?.value;
    let est = mc_price(&ctx.params, &payoff, lambda, s, v, mc)?;
    let cf = if lambda == 0.0 && payoff.kind() == PayoffKind::Call {
        Some(heston_cf_call(&ctx.params, s, v, ctx.params.maturity, payoff.strike())?)
    } else {
        None
    };
    Ok(OracleReport {
        lambda,
        s,
        v,
        pde,
        mc: est.price,
        mc_std_error: est.std_error,
        mc_paths: mc.n_paths,
        cf,
    })
}
