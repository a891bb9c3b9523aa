//! Executes one resolved run and writes its artifacts. Every model leaves a
//! `summary.json` with named invariant checks; in-memory results come back in
//! a typed [`RunOutcome`] so tests and the sweep driver can reuse them.

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

use nsir_core::grid::{Grid1D, GridError};
use nsir_core::ibvp::{
    self, envelope_check, existence_check, verify_bounds, BoundsReport, EnvelopeReport,
    FieldState, IbvpError, IbvpNumerics, SteadyReport, Trajectory,
};
use nsir_core::kernel::{build_kernel, KernelError};
use nsir_core::kinetics::{equilibria, KineticsError};
use nsir_core::spectral::{
    critical_length, principal_eigenvalue, r02, Coeff, EigenNumerics, EigenProblem, SpectralError,
};
use nsir_core::stefan::{
    classify, simulate_free_boundary, spreading_threshold_length, Classification, FrontTrajectory,
    StefanError, StefanInit, StefanNumerics,
};
use ndarray::Array1;

use crate::artifacts::{write_json, ArtifactError, CsvSink};
use crate::config::{ConfigError, InitKind, Model, RunConfig};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Ibvp(#[from] IbvpError),
    #[error(transparent)]
    Stefan(#[from] StefanError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// One named invariant verification attached to a run.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        CheckReport { name: name.to_string(), ok, detail: detail.into() }
    }
}

#[derive(Debug, Serialize)]
struct Summary {
    name: String,
    model: Model,
    ok: bool,
    checks: Vec<CheckReport>,
    metrics: BTreeMap<String, f64>,
}

/// Model-specific results kept in memory for callers.
pub enum Detail {
    Ibvp(IbvpDetail),
    Stefan(StefanDetail),
    Eigen(EigenJson),
    Thresholds(ThresholdsJson),
}

pub struct IbvpDetail {
    pub trajectory: Trajectory,
    pub bounds: BoundsReport,
    pub envelope: Option<EnvelopeReport>,
    pub existence: Option<SteadyReport>,
}

pub struct StefanDetail {
    pub trajectory: FrontTrajectory,
    pub classification: Classification,
    pub truncated: bool,
    pub truncation_reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenJson {
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
    pub half: f64,
    pub n: usize,
    pub lambda1: f64,
    pub residual: f64,
    pub iterations: usize,
    pub r02: f64,
    pub l_star: Option<f64>,
    pub lambda_at_l_star: Option<f64>,
    pub spreading_predicted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdsJson {
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
    pub half: f64,
    pub lambda1: f64,
    pub residual: f64,
    pub r02: f64,
    pub l_star: Option<f64>,
    pub lambda_at_l_star: Option<f64>,
    pub spreading_predicted: bool,
}

#[derive(Debug, Serialize)]
struct ClassificationJson<'c> {
    #[serde(flatten)]
    classification: &'c Classification,
    mu: f64,
    truncated: bool,
    truncation_reason: Option<&'c str>,
}

pub struct RunOutcome {
    pub name: String,
    pub model: Model,
    pub out_dir: PathBuf,
    pub ok: bool,
    pub checks: Vec<CheckReport>,
    pub detail: Detail,
}

/// Span tolerance used when comparing a final span against the critical
/// length (grid-scale slack around the bisection result).
pub const SPAN_TOL: f64 = 0.05;

pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome, RunnerError> {
    crate::artifacts::ensure_dir(out_dir)?;
    let (checks, detail, metrics) = match cfg.model {
        Model::Neumann | Model::Dirichlet => run_ibvp(cfg, out_dir)?,
        Model::Stefan => run_stefan(cfg, out_dir)?,
        Model::Eigen => run_eigen(cfg, out_dir)?,
        Model::Thresholds => run_thresholds(cfg, out_dir)?,
    };
    let ok = checks.iter().all(|c| c.ok);
    let summary =
        Summary { name: cfg.name.clone(), model: cfg.model, ok, checks: checks.clone(), metrics };
    write_json(out_dir.join("summary.json"), &summary)?;
    Ok(RunOutcome {
        name: cfg.name.clone(),
        model: cfg.model,
        out_dir: out_dir.to_path_buf(),
        ok,
        checks,
        detail,
    })
}

type ModelOutput = (Vec<CheckReport>, Detail, BTreeMap<String, f64>);

fn build_init(cfg: &RunConfig, grid: &Grid1D) -> FieldState {
    match cfg.init.kind {
        InitKind::Perturbed => ibvp::perturbed_init(grid, cfg.init.s, cfg.init.i),
        InitKind::Sine => ibvp::sine_init(grid, cfg.init.s, cfg.init.i, cfg.init.power),
        InitKind::Constant => FieldState {
            t: 0.0,
            s: Array1::from_elem(grid.len(), cfg.init.s),
            i: Array1::from_elem(grid.len(), cfg.init.i),
            r: Array1::zeros(grid.len()),
        },
    }
}

/// Recorded states closest to the requested snapshot times, deduplicated.
fn snapshot_picks<'t>(traj: &'t Trajectory, times: &[f64]) -> Vec<&'t FieldState> {
    let mut picked: Vec<usize> = Vec::new();
    for &target in times {
        let idx = traj
            .states
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (a.t - target).abs();
                let db = (b.t - target).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if !picked.contains(&idx) {
            picked.push(idx);
        }
    }
    picked.sort_unstable();
    picked.into_iter().map(|i| &traj.states[i]).collect()
}

fn sup(values: &Array1<f64>) -> f64 {
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn run_ibvp(cfg: &RunConfig, out_dir: &Path) -> Result<ModelOutput, RunnerError> {
    let p = cfg.params();
    let grid = Grid1D::symmetric(cfg.domain.half, cfg.domain.n)?;
    let kernel = build_kernel(&grid, &cfg.kernel)?;
    let init = build_init(cfg, &grid);
    let numerics = IbvpNumerics {
        dt: cfg.numerics.dt,
        record_cap: cfg.numerics.record_cap,
        steady_tol: cfg.numerics.steady_tol,
        stop_at_steady: cfg.numerics.steady_stop,
        ..Default::default()
    };
    let horizon = cfg.numerics.horizon;
    let traj = match cfg.model {
        Model::Neumann => ibvp::simulate_neumann(p, &kernel, &init, horizon, &numerics)?,
        _ => ibvp::simulate_dirichlet(p, &kernel, &init, horizon, &numerics)?,
    };

    let eq = equilibria(p);
    let mut timeseries = CsvSink::create(
        out_dir.join("timeseries.csv"),
        &["t", "sup_s", "sup_i", "sup_r", "max_total", "dist_e1", "dist_e2"],
    )?;
    for state in &traj.states {
        let dist_e2 = eq.e2.map(|e| state.sup_distance_to(e)).unwrap_or(f64::NAN);
        timeseries.row(&[
            state.t,
            sup(&state.s),
            sup(&state.i),
            sup(&state.r),
            sup(&state.total()),
            state.sup_distance_to(eq.e1),
            dist_e2,
        ])?;
    }
    timeseries.finish()?;

    let mut fields = CsvSink::create(out_dir.join("fields.csv"), &["t", "x", "s", "i", "r"])?;
    for state in snapshot_picks(&traj, &cfg.numerics.snapshot_times) {
        for (j, &x) in grid.nodes().iter().enumerate() {
            fields.row(&[state.t, x, state.s[j], state.i[j], state.r[j]])?;
        }
    }
    fields.finish()?;

    let bounds = verify_bounds(&traj, p);
    write_json(out_dir.join("bounds.json"), &bounds)?;

    let mut checks = vec![
        CheckReport::new(
            "positivity",
            bounds.positivity_ok,
            format!("smallest field value {:.3e}", bounds.min_value),
        ),
        CheckReport::new(
            "population_cap",
            bounds.cap_ok,
            format!("max total {:.6} against bound {:.6}", bounds.max_total, bounds.m_bound),
        ),
        CheckReport::new(
            "scalar_reduction",
            bounds.reduction_ok,
            format!("largest relative gap {:.3e}", bounds.reduction_gap),
        ),
    ];

    // The comparison envelope needs zero-flux walls and strictly positive
    // initial totals; skip it quietly where its hypotheses fail.
    let envelope = if cfg.model == Model::Neumann {
        match envelope_check(&traj, p) {
            Ok(report) => {
                write_json(out_dir.join("envelope.json"), &report)?;
                checks.push(CheckReport::new(
                    "envelope",
                    report.ok,
                    format!(
                        "worst undershoot {:.3e}, worst overshoot {:.3e} (tol {:.3e})",
                        report.n_below_g.max(report.v_below).max(report.i_below),
                        report.n_above_f.max(report.v_above).max(report.i_above),
                        report.tol
                    ),
                ));
                Some(report)
            }
            Err(IbvpError::BadInit(_)) => None,
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let existence = if cfg.existence && cfg.model == Model::Dirichlet {
        let report = existence_check(p, &kernel, horizon)?;
        write_json(out_dir.join("existence.json"), &report)?;
        checks.push(CheckReport::new(
            "existence_agreement",
            report.agree,
            format!(
                "prediction {} vs observed endemic {}",
                report.exists_predicted, report.empirical_positive
            ),
        ));
        Some(report)
    } else {
        None
    };

    let final_state = traj.final_state();
    let mut metrics = BTreeMap::new();
    metrics.insert("dt".into(), traj.dt);
    metrics.insert("steps".into(), traj.stats.steps as f64);
    metrics.insert("sup_i_final".into(), sup(&final_state.i));
    metrics.insert("dist_e1_final".into(), final_state.sup_distance_to(eq.e1));
    if let Some(e2) = eq.e2 {
        metrics.insert("dist_e2_final".into(), final_state.sup_distance_to(e2));
    }
    metrics.insert("r01".into(), eq.r01);
    metrics.insert("max_total".into(), traj.stats.max_total);
    if let Some(t) = traj.stats.steady_at {
        metrics.insert("steady_at".into(), t);
    }

    let detail = Detail::Ibvp(IbvpDetail { trajectory: traj, bounds, envelope, existence });
    Ok((checks, detail, metrics))
}

fn run_stefan(cfg: &RunConfig, out_dir: &Path) -> Result<ModelOutput, RunnerError> {
    let p = cfg.params();
    let init = StefanInit::new(cfg.stefan.s_level, cfg.stefan.i_amp);
    let numerics = StefanNumerics {
        s_spacing: cfg.stefan.s_spacing,
        n_mapped: cfg.stefan.n_mapped,
        l_dom: cfg.stefan.l_dom,
        dt: cfg.numerics.dt,
        record_cap: cfg.numerics.record_cap,
        snapshot_times: cfg.numerics.snapshot_times.clone(),
    };
    let horizon = cfg.numerics.horizon;

    // Runs that outgrow the truncated line (or pinch to nothing) still count:
    // the partial trajectory is classified and recorded as truncated.
    let (traj, truncated, truncation_reason) =
        match simulate_free_boundary(p, &cfg.kernel, &init, horizon, &numerics) {
            Ok(t) => (t, false, None),
            Err(StefanError::DomainOverrun { t, front, trajectory }) => (
                *trajectory,
                true,
                Some(format!("front reached {front:.6} at t = {t:.6}, beyond the truncated line")),
            ),
            Err(StefanError::FrontCollision { t, span, trajectory }) => (
                *trajectory,
                true,
                Some(format!("span pinched to {span:.3e} at t = {t:.6}")),
            ),
            Err(e) => return Err(e.into()),
        };

    let l_star = spreading_threshold_length(p, &cfg.kernel, &EigenNumerics::default(), 1e-6)?;
    let classification = classify(&traj, l_star.l_star, horizon, SPAN_TOL);

    let mut fronts = CsvSink::create(
        out_dir.join("fronts.csv"),
        &["t", "g", "h", "gdot", "hdot", "i_max"],
    )?;
    for s in &traj.samples {
        fronts.row(&[s.t, s.g, s.h, s.gdot, s.hdot, s.i_max])?;
    }
    fronts.finish()?;

    let mut fields = CsvSink::create(out_dir.join("fields.csv"), &["t", "xi", "x", "i", "r"])?;
    for snap in &traj.snapshots {
        let span = snap.h - snap.g;
        for (j, &xi) in traj.xi.iter().enumerate() {
            fields.row(&[snap.t, xi, snap.g + xi * span, snap.i[j], snap.r[j]])?;
        }
    }
    fields.finish()?;

    let line = traj.line_nodes();
    let mut s_line = CsvSink::create(out_dir.join("s_line.csv"), &["t", "x", "s"])?;
    for snap in &traj.snapshots {
        for (j, &x) in line.iter().enumerate() {
            s_line.row(&[snap.t, x, snap.s[j]])?;
        }
    }
    s_line.finish()?;

    write_json(
        out_dir.join("classification.json"),
        &ClassificationJson {
            classification: &classification,
            mu: p.mu,
            truncated,
            truncation_reason: truncation_reason.as_deref(),
        },
    )?;

    let positivity = traj.min_i >= 0.0 && traj.min_r >= 0.0 && traj.min_s >= 0.0;
    let cap_ok = traj.max_total <= traj.a_bound + 1e-8;
    let checks = vec![
        CheckReport::new(
            "front_monotonicity",
            traj.monotone,
            "g nonincreasing and h nondecreasing at every step",
        ),
        CheckReport::new(
            "population_cap",
            cap_ok,
            format!("max total {:.6} against bound {:.6}", traj.max_total, traj.a_bound),
        ),
        CheckReport::new(
            "front_symmetry",
            traj.max_front_asym < 1e-10,
            format!("max |g + h| = {:.3e}", traj.max_front_asym),
        ),
        CheckReport::new(
            "positivity",
            positivity,
            format!("min field value {:.3e}", traj.min_i.min(traj.min_r).min(traj.min_s)),
        ),
    ];

    let mut metrics = BTreeMap::new();
    metrics.insert("dt".into(), traj.dt);
    metrics.insert("steps".into(), traj.steps as f64);
    metrics.insert("l_star".into(), l_star.l_star);
    metrics.insert("r02_initial".into(), traj.r02_initial);
    metrics.insert("final_span".into(), classification.final_span);
    metrics.insert("span_rate".into(), classification.span_rate);
    metrics.insert("i_max_final".into(), classification.i_max_final);
    metrics.insert("max_front_asym".into(), traj.max_front_asym);

    let detail =
        Detail::Stefan(StefanDetail { trajectory: traj, classification, truncated, truncation_reason });
    Ok((checks, detail, metrics))
}

fn eigen_quantities(
    cfg: &RunConfig,
) -> Result<(f64, nsir_core::spectral::EigenPair, f64, Option<nsir_core::spectral::CriticalLength>), RunnerError>
{
    let e = &cfg.eigen;
    let d = e.d;
    let grid = Grid1D::symmetric(e.half, e.n)?;
    let kernel = build_kernel(&grid, &cfg.kernel)?;
    let pair = principal_eigenvalue(&EigenProblem {
        d,
        c1: Coeff::Const(e.c1),
        c2: Coeff::Const(e.c2),
        kernel: &kernel,
    })?;
    let numerics = EigenNumerics { n: e.n, ..Default::default() };
    let ratio = r02(d, e.c1, e.c2, e.half, &cfg.kernel, &numerics)?;
    let critical = if e.l_star {
        Some(critical_length(d, e.c1, e.c2, &cfg.kernel, &numerics, e.length_tol)?)
    } else {
        None
    };
    Ok((d, pair, ratio.r02, critical))
}

fn eigen_checks(lambda1: f64, ratio: f64, residual: f64) -> Vec<CheckReport> {
    // Sign agreement of (1 - r02) and lambda1; equality-at-threshold passes.
    let consistent = (1.0 - ratio) * lambda1 >= -1e-9;
    vec![
        CheckReport::new(
            "eigen_residual",
            residual.is_finite() && residual < 1e-6,
            format!("residual {residual:.3e}"),
        ),
        CheckReport::new(
            "threshold_sign_agreement",
            consistent,
            format!("r02 = {ratio:.12}, lambda1 = {lambda1:.12}"),
        ),
    ]
}

fn run_eigen(cfg: &RunConfig, out_dir: &Path) -> Result<ModelOutput, RunnerError> {
    let (d, pair, ratio, critical) = eigen_quantities(cfg)?;
    let e = &cfg.eigen;

    let grid = Grid1D::symmetric(e.half, e.n)?;
    let mut phi = CsvSink::create(out_dir.join("phi.csv"), &["x", "phi"])?;
    for (j, &x) in grid.nodes().iter().enumerate() {
        phi.row(&[x, pair.phi[j]])?;
    }
    phi.finish()?;

    let json = EigenJson {
        d,
        c1: e.c1,
        c2: e.c2,
        half: e.half,
        n: e.n,
        lambda1: pair.lambda1,
        residual: pair.residual,
        iterations: pair.iterations,
        r02: ratio,
        l_star: critical.as_ref().map(|c| c.l_star),
        lambda_at_l_star: critical.as_ref().map(|c| c.lambda_at_l_star),
        spreading_predicted: pair.lambda1 < 0.0,
    };
    write_json(out_dir.join("eigen.json"), &json)?;

    let checks = eigen_checks(json.lambda1, json.r02, json.residual);
    let mut metrics = BTreeMap::new();
    metrics.insert("lambda1".into(), json.lambda1);
    metrics.insert("r02".into(), json.r02);
    if let Some(l) = json.l_star {
        metrics.insert("l_star".into(), l);
    }

    Ok((checks, Detail::Eigen(json.clone()), metrics))
}

fn run_thresholds(cfg: &RunConfig, out_dir: &Path) -> Result<ModelOutput, RunnerError> {
    let (d, pair, ratio, critical) = eigen_quantities(cfg)?;
    let e = &cfg.eigen;

    let json = ThresholdsJson {
        d,
        c1: e.c1,
        c2: e.c2,
        half: e.half,
        lambda1: pair.lambda1,
        residual: pair.residual,
        r02: ratio,
        l_star: critical.as_ref().map(|c| c.l_star),
        lambda_at_l_star: critical.as_ref().map(|c| c.lambda_at_l_star),
        spreading_predicted: ratio >= 1.0,
    };
    write_json(out_dir.join("thresholds.json"), &json)?;

    let mut checks = eigen_checks(json.lambda1, json.r02, json.residual);
    if let Some(c) = &critical {
        checks.push(CheckReport::new(
            "critical_length_zero",
            c.lambda_at_l_star.abs() < 1e-3,
            format!("lambda1 at the crossing = {:.3e}", c.lambda_at_l_star),
        ));
    }

    let mut metrics = BTreeMap::new();
    metrics.insert("lambda1".into(), json.lambda1);
    metrics.insert("r02".into(), json.r02);
    if let Some(l) = json.l_star {
        metrics.insert("l_star".into(), l);
    }

    Ok((checks, Detail::Thresholds(json.clone()), metrics))
}
