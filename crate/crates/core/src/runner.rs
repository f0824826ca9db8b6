//! Run orchestration: time integration to fixed stop times, artifact-writing
//! runs, convergence sweeps against the stationary vortex, comparison with the
//! incompressible limit scheme, and the small analyses used on the results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cases::{CaseKind, CaseSpec};
use crate::config::{ResolvedRun, RunConfig};
use crate::diagnostics::{lgamma_norm, record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fields::{init_state, State};
use crate::io::{snapshot_stem, write_faces_csv, write_fields_csv, write_json, JsonLines};
use crate::limit_stepper::{limit_step_with_dt, LimitState};
use crate::mesh::Mesh;
use crate::stepper::{step, EtaPolicy, StepReport, StepperConfig};

/// Version and source revision, recorded in every manifest.
pub fn provenance() -> String {
    format!("apflow {} (rev {})", env!("CARGO_PKG_VERSION"), env!("APFLOW_GIT_REV"))
}

fn time_tol(t_end: f64) -> f64 {
    1e-12 * t_end.abs().max(1.0)
}

/// Advances `state` to `t_end`, landing exactly on every time in `stops`
/// (sorted). `on_stop` also fires for stops at or before the start time.
/// On failure `state` keeps the last accepted step.
pub fn integrate(
    mesh: &Mesh,
    state: &mut State,
    cfg: &StepperConfig,
    t_end: f64,
    stops: &[f64],
    mut on_step: impl FnMut(&State, &StepReport) -> Result<()>,
    mut on_stop: impl FnMut(&State) -> Result<()>,
) -> Result<()> {
    let tol = time_tol(t_end);
    let mut next = 0;
    while next < stops.len() && stops[next] <= state.time + tol {
        on_stop(state)?;
        next += 1;
    }
    while state.time < t_end - tol {
        let target = stops.get(next).copied().unwrap_or(t_end).min(t_end);
        let (mut s, rep) = step(mesh, state, cfg, target - state.time)?;
        if (s.time - target).abs() <= tol {
            s.time = target;
        }
        *state = s;
        on_step(state, &rep)?;
        while next < stops.len() && stops[next] <= state.time + tol {
            on_stop(state)?;
            next += 1;
        }
    }
    Ok(())
}

/// Step statistics gathered along a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    /// Newton iteration count -> number of steps.
    pub newton_histogram: BTreeMap<usize, usize>,
    /// Largest `(E^{n+1} - E^n) / E^n`; absent when the energy is unavailable.
    pub max_relative_energy_increase: Option<f64>,
    pub min_rho: f64,
    pub min_theta: f64,
    pub relative_mass_drift: f64,
    pub relative_theta_total_drift: f64,
    /// `sup_n |rho theta - 1|_{L^gamma}` over all time levels.
    pub max_theta_total_deviation: f64,
    pub max_div_u: f64,
}

impl RunStats {
    fn start(first: &DiagnosticsRecord) -> Self {
        Self {
            min_rho: first.min_rho,
            min_theta: first.min_theta,
            max_theta_total_deviation: first.theta_total_deviation,
            max_div_u: first.max_div_u,
            ..Self::default()
        }
    }

    fn observe(&mut self, first: &DiagnosticsRecord, rec: &DiagnosticsRecord, rep: &StepReport) {
        self.steps += 1;
        *self.newton_histogram.entry(rep.newton_iterations).or_default() += 1;
        if let (Some(a), Some(b)) = (rep.energy_before, rep.energy_after) {
            let inc = if a > 0.0 { (b - a) / a } else { b - a };
            let cur = self.max_relative_energy_increase.unwrap_or(f64::NEG_INFINITY);
            self.max_relative_energy_increase = Some(cur.max(inc));
        }
        self.min_rho = self.min_rho.min(rec.min_rho);
        self.min_theta = self.min_theta.min(rec.min_theta);
        let drift = |a: f64, b: f64| (b - a).abs() / a.abs();
        self.relative_mass_drift = self.relative_mass_drift.max(drift(first.mass, rec.mass));
        self.relative_theta_total_drift =
            self.relative_theta_total_drift.max(drift(first.theta_total, rec.theta_total));
        self.max_theta_total_deviation = self.max_theta_total_deviation.max(rec.theta_total_deviation);
        self.max_div_u = self.max_div_u.max(rec.max_div_u);
    }

    pub fn max_newton_iterations(&self) -> usize {
        self.newton_histogram.keys().next_back().copied().unwrap_or(0)
    }
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub initial: State,
    pub final_state: State,
    pub snapshots: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
    pub stats: RunStats,
}

/// Runs a resolved configuration without touching the file system.
pub fn simulate(run: &ResolvedRun) -> Result<Simulation> {
    let (mesh, cfg) = (&run.mesh, &run.stepper);
    let initial = init_state(mesh, &run.case, run.eps)?;
    let first = record(mesh, &initial, run.eps, cfg.gamma, 0.0, 0);
    let mut stats = RunStats::start(&first);
    let mut records = vec![first.clone()];
    let mut snapshots = Vec::new();
    let mut state = initial.clone();
    integrate(
        mesh,
        &mut state,
        cfg,
        run.t_end,
        &run.snapshot_times,
        |s, rep| {
            let rec = record(mesh, s, run.eps, cfg.gamma, rep.dt, rep.newton_iterations);
            stats.observe(&first, &rec, rep);
            records.push(rec);
            Ok(())
        },
        |s| {
            snapshots.push(s.clone());
            Ok(())
        },
    )?;
    Ok(Simulation { initial, final_state: state, snapshots, records, stats })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub time: f64,
    pub fields: String,
    pub faces: String,
}

/// Resolved parameters echoed into the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedEcho {
    pub case: String,
    pub eps: f64,
    pub gamma: f64,
    pub counts: Vec<usize>,
    pub beta: f64,
    /// `"auto"` or the fixed value.
    pub eta: String,
    pub dt_max: f64,
    pub t_end: f64,
    pub newton_rtol: f64,
    pub newton_max_iter: usize,
    pub snapshot_times: Vec<f64>,
}

impl ResolvedEcho {
    pub fn new(run: &ResolvedRun) -> Self {
        let s = &run.stepper;
        Self {
            case: run.case.name.clone(),
            eps: run.eps,
            gamma: s.gamma,
            counts: run.mesh.counts().to_vec(),
            beta: s.beta,
            eta: match s.eta {
                EtaPolicy::Auto => "auto".into(),
                EtaPolicy::Fixed(v) => v.to_string(),
            },
            dt_max: s.dt_max,
            t_end: run.t_end,
            newton_rtol: s.newton_rtol,
            newton_max_iter: s.newton_max_iter,
            snapshot_times: run.snapshot_times.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub provenance: String,
    /// `"ok"`, `"failed"` or `"dry-run"`.
    pub status: String,
    pub error: Option<String>,
    pub config: RunConfig,
    pub resolved: ResolvedEcho,
    pub final_time: f64,
    pub snapshots: Vec<SnapshotEntry>,
    pub diagnostics: String,
    pub stats: RunStats,
    pub wall_seconds: f64,
}

/// Paths written by [`run_case`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub diagnostics: PathBuf,
    pub snapshots: Vec<SnapshotEntry>,
    pub stats: RunStats,
}

fn write_snapshot(dir: &Path, stem: &str, run: &ResolvedRun, s: &State) -> Result<SnapshotEntry> {
    let fields = format!("fields_{stem}.csv");
    let faces = format!("faces_{stem}.csv");
    write_fields_csv(&dir.join(&fields), &run.mesh, s, run.eps, run.stepper.gamma)?;
    write_faces_csv(&dir.join(&faces), &run.mesh, s)?;
    Ok(SnapshotEntry { time: s.time, fields, faces })
}

/// Default output directory name of a single run.
pub fn run_dir_name(run: &ResolvedRun) -> String {
    format!("run-{}-eps{}", run.case.name, run.eps)
}

/// Runs `cfg` and writes field snapshots, the diagnostics stream and a
/// manifest. A failed run still writes its manifest and the last accepted
/// state before returning the error.
pub fn run_case(cfg: &RunConfig) -> Result<RunArtifacts> {
    let run = cfg.resolve()?;
    let dir = cfg.output_dir_or(&run_dir_name(&run));
    std::fs::create_dir_all(&dir)?;
    let manifest_path = dir.join("manifest.json");
    let diag_path = dir.join("diagnostics.jsonl");
    let started = Instant::now();
    let mut manifest = RunManifest {
        provenance: provenance(),
        status: "dry-run".into(),
        error: None,
        config: cfg.clone(),
        resolved: ResolvedEcho::new(&run),
        final_time: 0.0,
        snapshots: Vec::new(),
        diagnostics: "diagnostics.jsonl".into(),
        stats: RunStats::default(),
        wall_seconds: 0.0,
    };
    if cfg.dry_run {
        write_json(&manifest_path, &manifest)?;
        return Ok(RunArtifacts {
            dir,
            manifest: manifest_path,
            diagnostics: diag_path,
            snapshots: Vec::new(),
            stats: manifest.stats,
        });
    }

    let (mesh, scfg) = (&run.mesh, &run.stepper);
    let mut state = init_state(mesh, &run.case, run.eps)?;
    let mut diag = JsonLines::create(&diag_path)?;
    let first = record(mesh, &state, run.eps, scfg.gamma, 0.0, 0);
    diag.push(&first)?;
    let mut stats = RunStats::start(&first);
    let mut snapshots = Vec::new();
    let result = integrate(
        mesh,
        &mut state,
        scfg,
        run.t_end,
        &run.snapshot_times,
        |s, rep| {
            let rec = record(mesh, s, run.eps, scfg.gamma, rep.dt, rep.newton_iterations);
            stats.observe(&first, &rec, rep);
            diag.push(&rec)
        },
        |s| {
            snapshots.push(write_snapshot(&dir, &snapshot_stem(s.time), &run, s)?);
            Ok(())
        },
    );
    diag.finish()?;
    if let Err(e) = &result {
        snapshots.push(write_snapshot(&dir, "last", &run, &state)?);
        manifest.status = "failed".into();
        manifest.error = Some(e.to_string());
    } else {
        manifest.status = "ok".into();
    }
    manifest.final_time = state.time;
    manifest.snapshots = snapshots.clone();
    manifest.stats = stats.clone();
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    write_json(&manifest_path, &manifest)?;
    result?;
    Ok(RunArtifacts { dir, manifest: manifest_path, diagnostics: diag_path, snapshots, stats })
}

/// `log2(e_coarse / e_fine)`; undefined when either error vanishes.
pub fn eoc(coarse: f64, fine: f64) -> Option<f64> {
    (coarse > 0.0 && fine > 0.0).then(|| (coarse / fine).log2())
}

/// Discrete `L^1` distance of two states: cells weighted by `|K|`, faces by `|D_sigma|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Errors {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub theta: f64,
}

pub fn l1_errors(mesh: &Mesh, a: &State, b: &State) -> L1Errors {
    let dist = |x: &[f64], y: &[f64], w: f64| w * x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let vol = mesh.cell_volume();
    let face = |i: usize| {
        if i < mesh.dim() {
            dist(a.u.comp(i), b.u.comp(i), mesh.dual_volume(i))
        } else {
            0.0
        }
    };
    L1Errors {
        rho: dist(&a.rho, &b.rho, vol),
        u: face(0),
        v: face(1),
        theta: dist(&a.theta, &b.theta, vol),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocRow {
    pub eps: f64,
    pub n: usize,
    pub steps: usize,
    pub max_newton_iterations: usize,
    pub err_rho: f64,
    pub eoc_rho: Option<f64>,
    pub err_u: f64,
    pub eoc_u: Option<f64>,
    pub err_v: f64,
    pub eoc_v: Option<f64>,
    pub err_theta: f64,
    pub eoc_theta: Option<f64>,
    /// Largest relative energy increase over the run (negative when dissipative).
    pub max_relative_energy_increase: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EocTable {
    pub case: String,
    pub t_end: f64,
    pub rows: Vec<EocRow>,
}

impl EocTable {
    pub fn row(&self, eps: f64, n: usize) -> Option<&EocRow> {
        self.rows.iter().find(|r| r.eps == eps && r.n == n)
    }
}

fn require_stationary(case: &CaseSpec) -> Result<()> {
    match case.kind {
        CaseKind::StationaryVortex | CaseKind::Constant { .. } => Ok(()),
        _ => Err(Error::Config(format!(
            "{} has no known exact solution; convergence sweeps need a stationary case",
            case.name
        ))),
    }
}

/// Base configuration of a sweep entry on an `n`-cell-per-axis grid.
pub fn sweep_config(base: &RunConfig, eps: f64, n: usize) -> Result<RunConfig> {
    let case = CaseSpec::by_name(&base.case)?;
    Ok(RunConfig {
        eps: Some(eps),
        counts: Some(vec![n; case.dim()]),
        snapshot_times: Some(Vec::new()),
        ..base.clone()
    })
}

/// Errors at the final time against the stationary initial data, and EOCs
/// between successive grids at fixed `eps`. `on_run` sees every finished run.
pub fn sweep_eoc(
    base: &RunConfig,
    eps_list: &[f64],
    n_list: &[usize],
    mut on_run: impl FnMut(&EocRow, &Simulation),
) -> Result<EocTable> {
    let case = CaseSpec::by_name(&base.case)?;
    require_stationary(&case)?;
    let mut table = EocTable { case: case.name.clone(), t_end: 0.0, rows: Vec::new() };
    for &eps in eps_list {
        let mut prev: Option<L1Errors> = None;
        for &n in n_list {
            let run = sweep_config(base, eps, n)?.resolve()?;
            table.t_end = run.t_end;
            let sim = simulate(&run)?;
            let e = l1_errors(&run.mesh, &sim.final_state, &sim.initial);
            let rate = |f: fn(&L1Errors) -> f64| prev.as_ref().and_then(|p| eoc(f(p), f(&e)));
            let row = EocRow {
                eps,
                n,
                steps: sim.stats.steps,
                max_newton_iterations: sim.stats.max_newton_iterations(),
                err_rho: e.rho,
                eoc_rho: rate(|e| e.rho),
                err_u: e.u,
                eoc_u: rate(|e| e.u),
                err_v: e.v,
                eoc_v: rate(|e| e.v),
                err_theta: e.theta,
                eoc_theta: rate(|e| e.theta),
                max_relative_energy_increase: sim.stats.max_relative_energy_increase,
            };
            on_run(&row, &sim);
            table.rows.push(row);
            prev = Some(e);
        }
    }
    Ok(table)
}

/// Distances between the compressible run at one `eps` and the limit scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub eps: f64,
    pub steps: usize,
    /// `sup_n |rho^eps - rho~|_{L^gamma}`.
    pub rho: f64,
    /// `(sum_n dt_n |u^eps - U|_{L^2}^2)^{1/2}`.
    pub u: f64,
    /// `sup_n |theta^eps - theta~|_{L^gamma}`.
    pub theta: f64,
    /// `sup_n |rho^eps theta^eps - 1|_{L^gamma}`.
    pub theta_total_deviation: f64,
    pub max_relative_energy_increase: Option<f64>,
    pub max_limit_kinetic_increase: f64,
}

/// One point of the `|rho theta - 1|_{L^gamma}` time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSample {
    pub eps: f64,
    pub time: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LimitComparison {
    pub case: String,
    pub counts: Vec<usize>,
    pub t_end: f64,
    pub rows: Vec<LimitRow>,
    pub series: Vec<DeviationSample>,
}

impl LimitComparison {
    /// Least-squares slope of `log sup|rho theta - 1|` against `log eps`.
    pub fn decay_slope(&self) -> Option<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self.rows.iter().map(|r| (r.eps, r.theta_total_deviation)).unzip();
        fit_loglog_slope(&x, &y)
    }
}

/// Runs the compressible scheme and the limit scheme in lockstep (shared time
/// steps) from the same initial data, for each `eps`.
pub fn compare_limit(base: &RunConfig, eps_list: &[f64]) -> Result<LimitComparison> {
    let case = CaseSpec::by_name(&base.case)?;
    if case.dim() != 2 {
        return Err(Error::Config(format!("{} is not a 2D case", case.name)));
    }
    let mut out = LimitComparison { case: case.name.clone(), ..Default::default() };
    for &eps in eps_list {
        let run = RunConfig { eps: Some(eps), snapshot_times: Some(Vec::new()), ..base.clone() }.resolve()?;
        let (mesh, cfg) = (&run.mesh, &run.stepper);
        out.counts = mesh.counts().to_vec();
        out.t_end = run.t_end;
        let g = cfg.gamma;
        let mut s = init_state(mesh, &run.case, eps)?;
        let mut ls = LimitState::from_case(mesh, &run.case, eps)?;
        if ls.u != s.u {
            return Err(Error::Config("compressible and limit velocities differ initially".into()));
        }
        let deviation = |s: &State| {
            let d: Vec<f64> = s.theta_total().iter().map(|z| z - 1.0).collect();
            lgamma_norm(mesh, &d, g)
        };
        let gap = |a: &[f64], b: &[f64]| {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            lgamma_norm(mesh, &d, g)
        };
        let mut row = LimitRow {
            eps,
            steps: 0,
            rho: gap(&s.rho, &ls.rho),
            u: 0.0,
            theta: gap(&s.theta, &ls.theta()),
            theta_total_deviation: deviation(&s),
            max_relative_energy_increase: None,
            max_limit_kinetic_increase: f64::NEG_INFINITY,
        };
        out.series.push(DeviationSample { eps, time: 0.0, deviation: row.theta_total_deviation });
        let mut u_sq = 0.0;
        let tol = time_tol(run.t_end);
        while s.time < run.t_end - tol {
            let (next, rep) = step(mesh, &s, cfg, run.t_end - s.time)?;
            let (lnext, lrep) = limit_step_with_dt(mesh, &ls, cfg, rep.dt)?;
            s = next;
            ls = lnext;
            row.steps += 1;
            row.rho = row.rho.max(gap(&s.rho, &ls.rho));
            row.theta = row.theta.max(gap(&s.theta, &ls.theta()));
            let dev = deviation(&s);
            row.theta_total_deviation = row.theta_total_deviation.max(dev);
            out.series.push(DeviationSample { eps, time: s.time, deviation: dev });
            let sq: f64 = (0..mesh.dim())
                .map(|i| {
                    let d: f64 = s.u.comp(i).iter().zip(ls.u.comp(i)).map(|(a, b)| (a - b) * (a - b)).sum();
                    mesh.dual_volume(i) * d
                })
                .sum();
            u_sq += rep.dt * sq;
            if let (Some(a), Some(b)) = (rep.energy_before, rep.energy_after) {
                let inc = (b - a) / a;
                row.max_relative_energy_increase = Some(row.max_relative_energy_increase.map_or(inc, |m| m.max(inc)));
            }
            let k_inc = (lrep.kinetic_after - lrep.kinetic_before) / lrep.kinetic_before;
            row.max_limit_kinetic_increase = row.max_limit_kinetic_increase.max(k_inc);
        }
        row.u = u_sq.sqrt();
        out.rows.push(row);
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`; `None` for fewer than two usable points.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(sx, sy), (a, b)| (sx + a / n, sy + b / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(p, q), (a, b)| (p + (a - mx) * (b - my), q + (a - mx) * (a - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Centroid of `|f - baseline|` over the samples with `x` in each half-open window.
pub fn perturbation_centroids(x: &[f64], f: &[f64], baseline: f64, windows: &[(f64, f64)]) -> Vec<Option<f64>> {
    windows
        .iter()
        .map(|&(a, b)| {
            let (mut w, mut wx) = (0.0, 0.0);
            for (&xi, &fi) in x.iter().zip(f) {
                if xi >= a && xi < b {
                    let d = (fi - baseline).abs();
                    w += d;
                    wx += d * xi;
                }
            }
            (w > 0.0).then(|| wx / w)
        })
        .collect()
}
