//! Initial boundary value solver for the three-species reaction-diffusion
//! system with a nonlocal infection term,
//!
//! ```text
//! S_t - d S_xx = aN - beta S - bNS - k P[I] S
//! I_t - d I_xx = k P[I] S - gamma I - beta I - bNI
//! R_t - d R_xx = gamma I - beta R - bNR,        N = S + I + R,
//! ```
//!
//! under zero-flux or zero-value boundary conditions, plus the runtime
//! verifiers that make the qualitative theory observable: positivity and
//! the population cap, the exact reduction of N to a scalar logistic
//! equation, the ODE comparison sandwich, and the steady-state existence
//! predicate built from two principal eigenvalues.
//!
//! The scheme is deliberately plain: forward Euler, second-order central
//! diffusion, explicit reaction and nonlocal term, mirror ghost nodes for
//! the zero-flux closure. Explicit treatment keeps the algebraic
//! cancellation in S+I+R intact, which is the sharpest internal check the
//! solver has.

use crate::grid::Grid1D;
use crate::kernel::{KernelError, KernelMatrix};
use crate::kinetics::{self, KineticsError, ModelParams};
use crate::linalg::{self, LinalgError, SymTridiag};
use crate::spectral::{self, Coeff, EigenProblem, SpectralError};
use ndarray::Array1;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IbvpError {
    #[error("dt = {dt:.3e} violates the diffusion stability limit {limit:.3e}")]
    CFLViolation { dt: f64, limit: f64 },
    #[error("{species} dropped to {min:.3e} at t = {t:.6}; reduce dt")]
    PositivityLoss { t: f64, species: &'static str, min: f64 },
    #[error("invalid initial data: {0}")]
    BadInit(String),
    #[error("kernel grid has {kernel_n} nodes but initial data has {init_n}")]
    GridMismatch { kernel_n: usize, init_n: usize },
    #[error("steady-state solve stalled: Newton and time marching both failed (residual {residual:.3e})")]
    NewtonStall { residual: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundaryCondition {
    /// Zero flux through both ends (mirror ghost nodes).
    Neumann,
    /// Zero values at both ends.
    Dirichlet,
}

/// One snapshot of the three fields.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub t: f64,
    pub s: Array1<f64>,
    pub i: Array1<f64>,
    pub r: Array1<f64>,
}

impl FieldState {
    pub fn total(&self) -> Array1<f64> {
        &self.s + &self.i + &self.r
    }

    pub fn sup_distance_to(&self, point: [f64; 3]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.s.len() {
            worst = worst
                .max((self.s[j] - point[0]).abs())
                .max((self.i[j] - point[1]).abs())
                .max((self.r[j] - point[2]).abs());
        }
        worst
    }
}

/// Default initial data for the zero-flux problem: base values modulated by
/// `1 + 0.2 cos(pi x / L)`, recovered fraction starting at zero.
pub fn perturbed_init(grid: &Grid1D, s_base: f64, i_base: f64) -> FieldState {
    let l = grid.measure();
    let x = grid.nodes();
    let bump = x.mapv(|t| 1.0 + 0.2 * (std::f64::consts::PI * t / l).cos());
    FieldState {
        t: 0.0,
        s: bump.mapv(|v| s_base * v),
        i: bump.mapv(|v| i_base * v),
        r: Array1::zeros(grid.len()),
    }
}

/// Zero-boundary initial data: half-sine profiles raised to `power`.
pub fn sine_init(grid: &Grid1D, s_amp: f64, i_amp: f64, power: i32) -> FieldState {
    let n = grid.len();
    let left = grid.node(0);
    let l = grid.measure();
    let mut profile = Array1::from_iter((0..n).map(|j| {
        let xi = (grid.node(j) - left) / l;
        (std::f64::consts::PI * xi).sin().powi(power)
    }));
    // sin(pi) is ~1e-16 in floats; the boundary must be exactly zero.
    profile[0] = 0.0;
    profile[n - 1] = 0.0;
    FieldState {
        t: 0.0,
        s: profile.mapv(|v| s_amp * v),
        i: profile.mapv(|v| i_amp * v),
        r: Array1::zeros(n),
    }
}

/// Knobs of a single run. `dt = None` applies the stability policy
/// `min(0.9 h^2/(2d), 0.2/(a + gamma + k M))` with M the population cap.
#[derive(Debug, Clone, Copy)]
pub struct IbvpNumerics {
    pub dt: Option<f64>,
    /// Cap on recorded snapshots; interior steps are strided away.
    pub record_cap: usize,
    /// Steady state declared when `max |step change| / dt` stays below this...
    pub steady_tol: f64,
    /// ...for this many consecutive steps.
    pub steady_window: usize,
    /// Stop the run once steady (otherwise integrate to the horizon).
    pub stop_at_steady: bool,
    /// Error out when a field goes negative (disable only to let
    /// [`verify_bounds`] inspect an unstable run).
    pub halt_on_positivity_loss: bool,
}

impl Default for IbvpNumerics {
    fn default() -> Self {
        Self {
            dt: None,
            record_cap: 2001,
            steady_tol: 1e-8,
            steady_window: 100,
            stop_at_steady: false,
            halt_on_positivity_loss: true,
        }
    }
}

/// Aggregates tracked over every step (not just recorded snapshots).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunStats {
    pub steps: usize,
    pub min_s: f64,
    pub min_i: f64,
    pub min_r: f64,
    pub max_total: f64,
    /// Population cap `M = max(sup N_0, (a - beta)/b)`.
    pub m_bound: f64,
    pub steady_at: Option<f64>,
    pub positivity_lost_at: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid1D,
    pub bc: BoundaryCondition,
    pub dt: f64,
    pub states: Vec<FieldState>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldState {
        self.states.last().expect("trajectory always records the initial state")
    }
}

pub fn simulate_neumann(
    p: &ModelParams,
    kernel: &KernelMatrix,
    init: &FieldState,
    horizon: f64,
    numerics: &IbvpNumerics,
) -> Result<Trajectory, IbvpError> {
    simulate(p, kernel, BoundaryCondition::Neumann, init, horizon, numerics)
}

pub fn simulate_dirichlet(
    p: &ModelParams,
    kernel: &KernelMatrix,
    init: &FieldState,
    horizon: f64,
    numerics: &IbvpNumerics,
) -> Result<Trajectory, IbvpError> {
    simulate(p, kernel, BoundaryCondition::Dirichlet, init, horizon, numerics)
}

/// Mirror-ghost or pinned-end second difference, scaled by `1/h^2`.
fn laplacian_into(bc: BoundaryCondition, u: &[f64], inv_h2: f64, out: &mut [f64]) {
    let n = u.len();
    for j in 1..n - 1 {
        out[j] = (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_h2;
    }
    match bc {
        BoundaryCondition::Neumann => {
            out[0] = 2.0 * (u[1] - u[0]) * inv_h2;
            out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * inv_h2;
        }
        BoundaryCondition::Dirichlet => {
            out[0] = 0.0;
            out[n - 1] = 0.0;
        }
    }
}

pub fn simulate(
    p: &ModelParams,
    kernel: &KernelMatrix,
    bc: BoundaryCondition,
    init: &FieldState,
    horizon: f64,
    numerics: &IbvpNumerics,
) -> Result<Trajectory, IbvpError> {
    p.validate()?;
    let grid = *kernel.grid();
    let n = grid.len();
    if init.s.len() != n || init.i.len() != n || init.r.len() != n {
        return Err(IbvpError::GridMismatch { kernel_n: n, init_n: init.s.len() });
    }
    for (name, field) in [("S", &init.s), ("I", &init.i), ("R", &init.r)] {
        if field.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IbvpError::BadInit(format!("{name} must be finite and nonnegative")));
        }
        if bc == BoundaryCondition::Dirichlet && (field[0] != 0.0 || field[n - 1] != 0.0) {
            return Err(IbvpError::BadInit(format!("{name} must vanish at the boundary")));
        }
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(IbvpError::BadInit(format!("horizon must be positive, got {horizon}")));
    }

    let h = grid.spacing();
    let sup_n0 = (0..n)
        .map(|j| init.s[j] + init.i[j] + init.r[j])
        .fold(0.0f64, f64::max);
    let m_bound = sup_n0.max(p.n_star());
    let cfl_limit = 0.9 * h * h / (2.0 * p.d);
    let dt_nominal = match numerics.dt {
        Some(dt) => {
            if !(dt > 0.0) {
                return Err(IbvpError::BadInit(format!("dt must be positive, got {dt}")));
            }
            if dt > cfl_limit * (1.0 + 1e-12) {
                return Err(IbvpError::CFLViolation { dt, limit: cfl_limit });
            }
            dt
        }
        None => cfl_limit.min(0.2 / (p.a + p.gamma + p.k * m_bound)),
    };
    let steps = (horizon / dt_nominal).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let stride = steps.div_ceil(numerics.record_cap.max(2) - 1).max(1);

    let mut s = init.s.to_vec();
    let mut i_f = init.i.to_vec();
    let mut r = init.r.to_vec();
    let mut pi = vec![0.0; n];
    let mut lap_s = vec![0.0; n];
    let mut lap_i = vec![0.0; n];
    let mut lap_r = vec![0.0; n];

    let mut stats = RunStats {
        steps: 0,
        min_s: init.s.iter().cloned().fold(f64::INFINITY, f64::min),
        min_i: init.i.iter().cloned().fold(f64::INFINITY, f64::min),
        min_r: init.r.iter().cloned().fold(f64::INFINITY, f64::min),
        max_total: sup_n0,
        m_bound,
        steady_at: None,
        positivity_lost_at: None,
    };
    let mut states = Vec::with_capacity(steps / stride + 2);
    states.push(FieldState { t: 0.0, s: init.s.clone(), i: init.i.clone(), r: init.r.clone() });

    let inv_h2 = 1.0 / (h * h);
    let mut calm_streak = 0usize;
    for step in 0..steps {
        kernel.apply_into(&i_f, &mut pi)?;
        laplacian_into(bc, &s, inv_h2, &mut lap_s);
        laplacian_into(bc, &i_f, inv_h2, &mut lap_i);
        laplacian_into(bc, &r, inv_h2, &mut lap_r);

        let mut drift = 0.0f64;
        let mut step_min = f64::INFINITY;
        let mut step_max_total = 0.0f64;
        let (lo, hi) = match bc {
            // Dirichlet rows stay pinned at zero.
            BoundaryCondition::Dirichlet => (1, n - 1),
            BoundaryCondition::Neumann => (0, n),
        };
        for j in lo..hi {
            let total = s[j] + i_f[j] + r[j];
            let common = p.beta + p.b * total;
            let infect = p.k * pi[j] * s[j];
            let ds = dt * (p.d * lap_s[j] + p.a * total - common * s[j] - infect);
            let di = dt * (p.d * lap_i[j] + infect - (p.gamma + common) * i_f[j]);
            let dr = dt * (p.d * lap_r[j] + p.gamma * i_f[j] - common * r[j]);
            s[j] += ds;
            i_f[j] += di;
            r[j] += dr;
            drift = drift.max(ds.abs()).max(di.abs()).max(dr.abs());
            step_min = step_min.min(s[j]).min(i_f[j]).min(r[j]);
            step_max_total = step_max_total.max(s[j] + i_f[j] + r[j]);
        }
        let t_now = (step + 1) as f64 * dt;
        stats.steps = step + 1;
        stats.min_s = stats.min_s.min(s.iter().cloned().fold(f64::INFINITY, f64::min));
        stats.min_i = stats.min_i.min(i_f.iter().cloned().fold(f64::INFINITY, f64::min));
        stats.min_r = stats.min_r.min(r.iter().cloned().fold(f64::INFINITY, f64::min));
        stats.max_total = stats.max_total.max(step_max_total);

        if step_min < 0.0 || !step_min.is_finite() {
            if stats.positivity_lost_at.is_none() {
                stats.positivity_lost_at = Some(t_now);
            }
            if numerics.halt_on_positivity_loss {
                let (species, min) = worst_species(&s, &i_f, &r);
                return Err(IbvpError::PositivityLoss { t: t_now, species, min });
            }
            if !step_min.is_finite() {
                // The run has blown up; keep what we have for diagnosis.
                states.push(snapshot(t_now, &s, &i_f, &r));
                break;
            }
        }

        if drift / dt < numerics.steady_tol {
            calm_streak += 1;
            if calm_streak >= numerics.steady_window && stats.steady_at.is_none() {
                stats.steady_at = Some(t_now);
                if numerics.stop_at_steady {
                    states.push(snapshot(t_now, &s, &i_f, &r));
                    break;
                }
            }
        } else {
            calm_streak = 0;
        }

        if (step + 1) % stride == 0 || step + 1 == steps {
            states.push(snapshot(t_now, &s, &i_f, &r));
        }
    }

    Ok(Trajectory { grid, bc, dt, states, stats })
}

fn snapshot(t: f64, s: &[f64], i: &[f64], r: &[f64]) -> FieldState {
    FieldState {
        t,
        s: Array1::from(s.to_vec()),
        i: Array1::from(i.to_vec()),
        r: Array1::from(r.to_vec()),
    }
}

fn worst_species<'a>(s: &[f64], i: &[f64], r: &[f64]) -> (&'a str, f64) {
    let mins = [
        ("S", s.iter().cloned().fold(f64::INFINITY, f64::min)),
        ("I", i.iter().cloned().fold(f64::INFINITY, f64::min)),
        ("R", r.iter().cloned().fold(f64::INFINITY, f64::min)),
    ];
    mins.into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three candidates")
}

/// Result of the three runtime checks on a finished trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    /// Smallest field value seen at any node and step.
    pub min_value: f64,
    pub positivity_ok: bool,
    /// Population cap and the largest recorded total.
    pub m_bound: f64,
    pub max_total: f64,
    pub cap_ok: bool,
    /// Largest relative gap between recorded S+I+R and the independently
    /// integrated scalar logistic field.
    pub reduction_gap: f64,
    pub reduction_ok: bool,
    pub ok: bool,
}

/// Checks, on the recorded trajectory: (i) nonnegativity to -1e-12;
/// (ii) the population cap `sup N <= M + 1e-10`;
/// (iii) the reduction identity: S+I+R evolves exactly like the scalar
/// logistic field N integrated by the same scheme, because the infection,
/// recovery, and crowding exchange terms cancel algebraically in the sum.
pub fn verify_bounds(traj: &Trajectory, p: &ModelParams) -> BoundsReport {
    let min_value = traj.stats.min_s.min(traj.stats.min_i).min(traj.stats.min_r);
    let positivity_ok = min_value >= -1e-12;
    let cap_ok = traj.stats.max_total <= traj.stats.m_bound + 1e-10;

    // Independent scalar integration of N with the same grid, dt, closure.
    let n = traj.grid.len();
    let inv_h2 = 1.0 / (traj.grid.spacing() * traj.grid.spacing());
    let first = &traj.states[0];
    let mut field: Vec<f64> = (0..n).map(|j| first.s[j] + first.i[j] + first.r[j]).collect();
    let mut lap = vec![0.0; n];
    let mut gap = 0.0f64;
    let mut scale = 1.0f64;
    let mut rec = 1; // states[0] matches by construction
    let total_steps = traj.stats.steps;
    for step in 0..total_steps {
        laplacian_into(traj.bc, &field, inv_h2, &mut lap);
        let (lo, hi) = match traj.bc {
            BoundaryCondition::Dirichlet => (1, n - 1),
            BoundaryCondition::Neumann => (0, n),
        };
        for j in lo..hi {
            let total = field[j];
            field[j] += traj.dt * (p.d * lap[j] + (p.a * total - (p.beta + p.b * total) * total));
        }
        let t_now = (step + 1) as f64 * traj.dt;
        if rec < traj.states.len() && (traj.states[rec].t - t_now).abs() < 0.5 * traj.dt {
            let state = &traj.states[rec];
            for j in 0..n {
                let summed = state.s[j] + state.i[j] + state.r[j];
                gap = gap.max((summed - field[j]).abs());
                scale = scale.max(summed.abs());
            }
            rec += 1;
        }
    }
    let reduction_gap = gap / scale;
    let reduction_ok = reduction_gap <= 1e-12;

    BoundsReport {
        min_value,
        positivity_ok,
        m_bound: traj.stats.m_bound,
        max_total: traj.stats.max_total,
        cap_ok,
        reduction_gap,
        reduction_ok,
        ok: positivity_ok && cap_ok && reduction_ok,
    }
}

/// Worst signed exceedances of the comparison sandwich; every field <= 0
/// means the corresponding bound held everywhere.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeReport {
    pub tol: f64,
    pub n_below_g: f64,
    pub n_above_f: f64,
    pub v_below: f64,
    pub v_above: f64,
    pub i_below: f64,
    pub i_above: f64,
    pub ok: bool,
}

/// Verifies the comparison sandwich along a zero-flux trajectory:
/// `g(t) <= N <= f(t)`, `Vunder <= S+I <= Vbar`, `Iunder <= I <= Ibar`
/// at every recorded time and node, within `tol = 1e-6 + 10 dt`.
///
/// The scalar envelopes are seeded from the extremes of the initial data,
/// as the comparison principle prescribes.
pub fn envelope_check(traj: &Trajectory, p: &ModelParams) -> Result<EnvelopeReport, IbvpError> {
    let first = &traj.states[0];
    let n = traj.grid.len();
    let n0: Vec<f64> = (0..n).map(|j| first.s[j] + first.i[j] + first.r[j]).collect();
    let v0: Vec<f64> = (0..n).map(|j| first.s[j] + first.i[j]).collect();
    let f0 = n0.iter().cloned().fold(0.0f64, f64::max);
    let g0 = n0.iter().cloned().fold(f64::INFINITY, f64::min);
    let vbar0 = v0.iter().cloned().fold(0.0f64, f64::max);
    let vunder0 = v0.iter().cloned().fold(f64::INFINITY, f64::min);
    let ibar0 = first.i.iter().cloned().fold(0.0f64, f64::max);
    let iunder0 = first.i.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(g0 > 0.0 && vunder0 > 0.0 && iunder0 > 0.0) {
        return Err(IbvpError::BadInit(
            "comparison sandwich needs strictly positive initial data everywhere".into(),
        ));
    }

    let times: Vec<f64> = traj.states.iter().map(|st| st.t).collect();
    let envelopes = comparison_at_times(
        p,
        [vbar0, vunder0, ibar0, iunder0],
        f0,
        g0,
        &times,
    )?;

    let tol = 1e-6 + 10.0 * traj.dt;
    let mut rep = EnvelopeReport {
        tol,
        n_below_g: f64::NEG_INFINITY,
        n_above_f: f64::NEG_INFINITY,
        v_below: f64::NEG_INFINITY,
        v_above: f64::NEG_INFINITY,
        i_below: f64::NEG_INFINITY,
        i_above: f64::NEG_INFINITY,
        ok: false,
    };
    for (state, env) in traj.states.iter().zip(&envelopes) {
        let [vbar, vunder, ibar, iunder] = *env;
        let f_t = kinetics::logistic_envelope(f0, p, state.t);
        let g_t = kinetics::logistic_envelope(g0, p, state.t);
        for j in 0..n {
            let total = state.s[j] + state.i[j] + state.r[j];
            let v = state.s[j] + state.i[j];
            rep.n_below_g = rep.n_below_g.max(g_t - total - tol);
            rep.n_above_f = rep.n_above_f.max(total - f_t - tol);
            rep.v_below = rep.v_below.max(vunder - v - tol);
            rep.v_above = rep.v_above.max(v - vbar - tol);
            rep.i_below = rep.i_below.max(iunder - state.i[j] - tol);
            rep.i_above = rep.i_above.max(state.i[j] - ibar - tol);
        }
    }
    rep.ok = [
        rep.n_below_g,
        rep.n_above_f,
        rep.v_below,
        rep.v_above,
        rep.i_below,
        rep.i_above,
    ]
    .iter()
    .all(|v| *v <= 0.0);
    Ok(rep)
}

/// RK4 samples of the comparison system exactly at the requested times.
fn comparison_at_times(
    p: &ModelParams,
    init: [f64; 4],
    f0: f64,
    g0: f64,
    times: &[f64],
) -> Result<Vec<[f64; 4]>, IbvpError> {
    let cap = p.n_star().max(f0);
    let mut dt = 1e-3 * (1.0 / (p.a + p.gamma + p.k * cap)).min(1.0);
    'attempt: for halvings in 0..=10 {
        let mut y = init;
        let mut t = times[0];
        let mut out = Vec::with_capacity(times.len());
        out.push(y);
        for &target in &times[1..] {
            let span = target - t;
            let sub = (span / dt).ceil().max(1.0) as usize;
            let step = span / sub as f64;
            for _ in 0..sub {
                let eval = |tau: f64, y: &[f64; 4]| {
                    kinetics::comparison_rhs(
                        p,
                        kinetics::logistic_envelope(f0, p, tau),
                        kinetics::logistic_envelope(g0, p, tau),
                        y,
                    )
                };
                let k1 = eval(t, &y);
                let y2 = [
                    y[0] + 0.5 * step * k1[0],
                    y[1] + 0.5 * step * k1[1],
                    y[2] + 0.5 * step * k1[2],
                    y[3] + 0.5 * step * k1[3],
                ];
                let k2 = eval(t + 0.5 * step, &y2);
                let y3 = [
                    y[0] + 0.5 * step * k2[0],
                    y[1] + 0.5 * step * k2[1],
                    y[2] + 0.5 * step * k2[2],
                    y[3] + 0.5 * step * k2[3],
                ];
                let k3 = eval(t + 0.5 * step, &y3);
                let y4 = [
                    y[0] + step * k3[0],
                    y[1] + step * k3[1],
                    y[2] + step * k3[2],
                    y[3] + step * k3[3],
                ];
                let k4 = eval(t + step, &y4);
                for c in 0..4 {
                    y[c] += step / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
                t += step;
                if y.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    if halvings == 10 {
                        return Err(IbvpError::Kinetics(KineticsError::StepSizeTooLarge {
                            dt,
                            halvings,
                        }));
                    }
                    dt *= 0.5;
                    continue 'attempt;
                }
            }
            t = target; // kill accumulated roundoff in t
            out.push(y);
        }
        return Ok(out);
    }
    unreachable!("attempt loop returns or errors within 10 halvings")
}

/// Positive steady state of the scalar logistic problem
/// `-d N'' = (a - beta) N - b N^2` with zero boundary values, or proof
/// that none exists.
#[derive(Debug, Clone)]
pub enum TildeNOutcome {
    /// `lambda1(beta - a) >= 0`: the only nonnegative steady state is zero.
    Extinct { lambda1_local: f64 },
    Positive(TildeN),
}

#[derive(Debug, Clone)]
pub struct TildeN {
    pub values: Array1<f64>,
    /// Sup norm of the discrete residual at the returned state.
    pub residual: f64,
    pub newton_iterations: usize,
    pub fallback_used: bool,
    /// Distance of the linearization spectrum from zero; positive means the
    /// state is nondegenerate and linearly stable.
    pub stability_margin: f64,
}

pub fn tilde_n(p: &ModelParams, grid: &Grid1D, tol: f64) -> Result<TildeNOutcome, IbvpError> {
    p.validate()?;
    let interval = (grid.node(0), grid.node(grid.len() - 1));
    let lambda1_local = spectral::lambda1_local(p.d, p.beta - p.a, interval)?;
    if lambda1_local >= 0.0 {
        return Ok(TildeNOutcome::Extinct { lambda1_local });
    }

    let n = grid.len();
    let cap = p.n_star();
    let left = grid.node(0);
    let l = grid.measure();
    let guess = Array1::from_iter((0..n).map(|j| {
        let xi = (grid.node(j) - left) / l;
        cap * (std::f64::consts::PI * xi).sin()
    }));

    match newton_steady(p, grid, guess.clone(), tol) {
        Ok((values, residual, iters)) => {
            let margin = stability_margin(p, grid, &values)?;
            Ok(TildeNOutcome::Positive(TildeN {
                values,
                residual,
                newton_iterations: iters,
                fallback_used: false,
                stability_margin: margin,
            }))
        }
        Err(_) => {
            // March the parabolic problem to quiescence, then polish.
            let marched = time_march_scalar(p, grid, &guess)?;
            let (values, residual, iters) = newton_steady(p, grid, marched, tol)
                .map_err(|r| IbvpError::NewtonStall { residual: r })?;
            let margin = stability_margin(p, grid, &values)?;
            Ok(TildeNOutcome::Positive(TildeN {
                values,
                residual,
                newton_iterations: iters,
                fallback_used: true,
                stability_margin: margin,
            }))
        }
    }
}

/// Damped Newton on the interior residual
/// `G_j = d (N_{j-1} - 2N_j + N_{j+1})/h^2 + (a - beta)N_j - b N_j^2`.
/// Returns the interior-positive solution, its residual, and the iteration
/// count, or the last residual on failure.
fn newton_steady(
    p: &ModelParams,
    grid: &Grid1D,
    mut state: Array1<f64>,
    tol: f64,
) -> Result<(Array1<f64>, f64, usize), f64> {
    let n = grid.len();
    let m = n - 2;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let r = p.a - p.beta;
    let residual = |u: &Array1<f64>| -> Vec<f64> {
        (1..n - 1)
            .map(|j| p.d * (u[j - 1] - 2.0 * u[j] + u[j + 1]) * inv_h2 + (r - p.b * u[j]) * u[j])
            .collect()
    };
    let sup = |g: &[f64]| g.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));

    state[0] = 0.0;
    state[n - 1] = 0.0;
    let mut g = residual(&state);
    let mut g_norm = sup(&g);
    let stop = tol.max(1e-13 * (p.d * inv_h2 + r + p.b * p.n_star()));
    for it in 0..60 {
        if g_norm <= stop {
            if state.iter().skip(1).take(n - 2).any(|v| *v <= 0.0) {
                return Err(g_norm); // converged to a sign-changing branch
            }
            return Ok((state, g_norm, it));
        }
        let sub = vec![p.d * inv_h2; m];
        let sup_d = vec![p.d * inv_h2; m];
        let diag: Vec<f64> =
            (1..n - 1).map(|j| -2.0 * p.d * inv_h2 + r - 2.0 * p.b * state[j]).collect();
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let delta = match linalg::tridiag_solve(&sub, &diag, &sup_d, &rhs) {
            Ok(d) => d,
            Err(_) => return Err(g_norm),
        };
        // Backtracking: accept the first step that reduces the residual.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let mut trial = state.clone();
            for j in 1..n - 1 {
                trial[j] += lambda * delta[j - 1];
            }
            let tg = residual(&trial);
            let t_norm = sup(&tg);
            if t_norm < g_norm * (1.0 - 0.25 * lambda) || t_norm <= stop {
                state = trial;
                g = tg;
                g_norm = t_norm;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(g_norm);
        }
    }
    Err(g_norm)
}

/// Explicit scalar logistic integration to quiescence, used as the Newton
/// fallback initializer.
fn time_march_scalar(
    p: &ModelParams,
    grid: &Grid1D,
    init: &Array1<f64>,
) -> Result<Array1<f64>, IbvpError> {
    let n = grid.len();
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let dt = (0.9 * h * h / (2.0 * p.d)).min(0.2 / (p.a + p.b * p.n_star()));
    let mut field = init.to_vec();
    field[0] = 0.0;
    field[n - 1] = 0.0;
    let mut lap = vec![0.0; n];
    let mut calm = 0usize;
    for step in 0..20_000_000usize {
        laplacian_into(BoundaryCondition::Dirichlet, &field, inv_h2, &mut lap);
        let mut drift = 0.0f64;
        for j in 1..n - 1 {
            let du = dt * (p.d * lap[j] + (p.a - p.beta - p.b * field[j]) * field[j]);
            field[j] += du;
            drift = drift.max(du.abs());
        }
        if drift / dt < 1e-10 {
            calm += 1;
            if calm >= 100 {
                return Ok(Array1::from(field));
            }
        } else {
            calm = 0;
        }
        if step == 19_999_999 {
            break;
        }
    }
    Err(IbvpError::NewtonStall { residual: f64::NAN })
}

/// Smallest-magnitude bound of the steady-state linearization spectrum:
/// positive when `-d phi'' - (a - beta - 2 b N) phi` has all eigenvalues
/// positive, i.e. the state is nondegenerate and linearly stable.
fn stability_margin(
    p: &ModelParams,
    grid: &Grid1D,
    state: &Array1<f64>,
) -> Result<f64, IbvpError> {
    let n = grid.len();
    let m = n - 2;
    let h = grid.spacing();
    let inv_h2 = 1.0 / (h * h);
    let diag: Vec<f64> = (1..n - 1)
        .map(|j| 2.0 * p.d * inv_h2 - (p.a - p.beta - 2.0 * p.b * state[j]))
        .collect();
    let off = vec![-p.d * inv_h2; m - 1];
    let tri = SymTridiag { diag, off };
    Ok(tri.smallest_eigenvalue())
}

/// Outcome of one zero-boundary probe run inside [`existence_check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeOutcome {
    pub steady: bool,
    pub sup_i_final: f64,
    /// Whether the run settled on a state with a genuinely positive
    /// infected component.
    pub endemic: bool,
}

/// Existence predicate for positive steady states of the zero-boundary
/// problem, with an empirical cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyReport {
    /// Closed-form principal eigenvalue `d pi^2/L^2 + (beta - a)`.
    pub lambda1_local_check: f64,
    /// Principal eigenvalue of `-d phi'' - k N~ P[phi] + (gamma + beta + b N~) phi`,
    /// absent when the scalar steady state does not exist.
    pub lambda1_nonlocal_check: Option<f64>,
    /// Both eigenvalues negative.
    pub exists_predicted: bool,
    pub probes: Vec<ProbeOutcome>,
    /// All probes settled on endemic states.
    pub empirical_positive: bool,
    /// Largest pairwise sup distance between the settled states, when all
    /// probes are endemic (a uniqueness probe, not an assertion).
    pub pairwise_gap: Option<f64>,
    /// Prediction and observation agree.
    pub agree: bool,
    #[serde(skip)]
    pub finals: Vec<FieldState>,
}

/// Infected level below which a settled state counts as disease-free.
const ENDEMIC_FLOOR: f64 = 1e-6;

/// Decides existence of a positive steady state two ways: by the two-part
/// eigenvalue criterion, and by marching the full system from three
/// distinct positive initial profiles.
pub fn existence_check(
    p: &ModelParams,
    kernel: &KernelMatrix,
    horizon: f64,
) -> Result<SteadyReport, IbvpError> {
    let grid = kernel.grid();
    let interval = (grid.node(0), grid.node(grid.len() - 1));
    let lambda1_local_check = spectral::lambda1_local(p.d, p.beta - p.a, interval)?;
    let tilde = tilde_n(p, grid, 1e-10)?;
    let lambda1_nonlocal_check = match &tilde {
        TildeNOutcome::Extinct { .. } => None,
        TildeNOutcome::Positive(tn) => {
            let c1 = tn.values.mapv(|v| p.k * v);
            let c2 = tn.values.mapv(|v| p.gamma + p.beta + p.b * v);
            let pair = spectral::principal_eigenvalue(&EigenProblem {
                d: p.d,
                c1: Coeff::Field(c1),
                c2: Coeff::Field(c2),
                kernel,
            })?;
            Some(pair.lambda1)
        }
    };
    let exists_predicted =
        lambda1_local_check < 0.0 && lambda1_nonlocal_check.is_some_and(|l| l < 0.0);

    let cap = p.n_star();
    let inits = [
        sine_init(grid, cap, 0.5 * cap, 1),
        sine_init(grid, 0.3 * cap, 0.8 * cap, 2),
        sine_init(grid, 1.5 * cap, 0.1 * cap, 1),
    ];
    let numerics = IbvpNumerics { stop_at_steady: true, ..Default::default() };
    let mut probes = Vec::with_capacity(3);
    let mut finals = Vec::with_capacity(3);
    for init in &inits {
        let traj = simulate_dirichlet(p, kernel, init, horizon, &numerics)?;
        let last = traj.final_state();
        let sup_i_final = last.i.iter().cloned().fold(0.0f64, f64::max);
        probes.push(ProbeOutcome {
            steady: traj.stats.steady_at.is_some(),
            sup_i_final,
            endemic: sup_i_final > ENDEMIC_FLOOR,
        });
        finals.push(last.clone());
    }
    let empirical_positive = probes.iter().all(|o| o.endemic);
    let pairwise_gap = if empirical_positive {
        let mut worst = 0.0f64;
        for i in 0..finals.len() {
            for j in i + 1..finals.len() {
                let a = &finals[i];
                let b = &finals[j];
                for idx in 0..a.s.len() {
                    worst = worst
                        .max((a.s[idx] - b.s[idx]).abs())
                        .max((a.i[idx] - b.i[idx]).abs())
                        .max((a.r[idx] - b.r[idx]).abs());
                }
            }
        }
        Some(worst)
    } else {
        None
    };

    Ok(SteadyReport {
        lambda1_local_check,
        lambda1_nonlocal_check,
        exists_predicted,
        probes,
        empirical_positive,
        pairwise_gap,
        agree: exists_predicted == empirical_positive,
        finals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, KernelSpec};
    use crate::kinetics::equilibria;

    fn params(k: f64, d: f64) -> ModelParams {
        ModelParams::new(2.0, 1.0, 1.0, 0.5, k, d, 1.0, 1.0).unwrap()
    }

    fn uniform(n: usize) -> (Grid1D, KernelMatrix) {
        let grid = Grid1D::new(-1.0, 1.0, n).unwrap();
        let kernel = build_kernel(&grid, &KernelSpec::uniform()).unwrap();
        (grid, kernel)
    }

    fn constant_state(grid: &Grid1D, triple: [f64; 3]) -> FieldState {
        let n = grid.len();
        FieldState {
            t: 0.0,
            s: Array1::from_elem(n, triple[0]),
            i: Array1::from_elem(n, triple[1]),
            r: Array1::from_elem(n, triple[2]),
        }
    }

    #[test]
    fn constant_equilibria_are_fixed_points_of_the_scheme() {
        let p = params(5.0, 1.0);
        let eq = equilibria(&p);
        let (grid, kernel) = uniform(101);
        for point in [eq.e0, eq.e1, eq.e2.unwrap()] {
            let init = constant_state(&grid, point);
            let traj =
                simulate_neumann(&p, &kernel, &init, 10.0, &IbvpNumerics::default()).unwrap();
            let dist = traj.final_state().sup_distance_to(point);
            assert!(dist < 1e-8, "equilibrium {point:?} drifted by {dist}");
        }
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let p = params(5.0, 1.0);
        let (grid, kernel) = uniform(101);
        let init = perturbed_init(&grid, 0.5, 0.4);
        let numerics = IbvpNumerics { dt: Some(1.0), ..Default::default() };
        assert!(matches!(
            simulate_neumann(&p, &kernel, &init, 1.0, &numerics),
            Err(IbvpError::CFLViolation { .. })
        ));
    }

    #[test]
    fn stiff_reaction_without_the_cap_loses_positivity() {
        // dt at the diffusion limit but way beyond the reaction limit.
        let p = params(1e4, 1.0);
        let (grid, kernel) = uniform(101);
        let init = perturbed_init(&grid, 1.0, 1.0);
        let h = grid.spacing();
        let numerics =
            IbvpNumerics { dt: Some(0.9 * h * h / 2.0), ..Default::default() };
        match simulate_neumann(&p, &kernel, &init, 2.0, &numerics) {
            Err(IbvpError::PositivityLoss { .. }) => {}
            Err(other) => panic!("expected positivity loss, got {other:?}"),
            Ok(_) => panic!("expected positivity loss, run stayed nonnegative"),
        }
        // Same run, but kept alive for the verifier to inspect.
        let lenient = IbvpNumerics {
            halt_on_positivity_loss: false,
            ..numerics
        };
        let traj = simulate_neumann(&p, &kernel, &init, 2.0, &lenient).unwrap();
        let report = verify_bounds(&traj, &p);
        assert!(!report.positivity_ok);
        assert!(!report.ok);
    }

    #[test]
    fn below_threshold_run_approaches_the_disease_free_state() {
        let p = params(2.0, 1.0); // ratio 0.8
        let (grid, kernel) = uniform(101);
        let init = perturbed_init(&grid, 1.0, 0.4);
        let traj = simulate_neumann(&p, &kernel, &init, 100.0, &IbvpNumerics::default()).unwrap();
        let dist = traj.final_state().sup_distance_to([1.0, 0.0, 0.0]);
        assert!(dist < 1e-2, "distance to disease-free state: {dist}");
    }

    #[test]
    fn above_threshold_run_approaches_the_endemic_state() {
        let p = params(5.0, 1.0); // ratio 2
        let eq = equilibria(&p).e2.unwrap();
        let (grid, kernel) = uniform(101);
        let init = perturbed_init(&grid, eq[0], eq[1]);
        let traj = simulate_neumann(&p, &kernel, &init, 120.0, &IbvpNumerics::default()).unwrap();
        let dist = traj.final_state().sup_distance_to(eq);
        assert!(dist < 5e-3, "distance to endemic state: {dist}");
    }

    #[test]
    fn bounds_verifier_passes_on_a_healthy_run() {
        let p = params(5.0, 1.0);
        let (grid, kernel) = uniform(101);
        let init = perturbed_init(&grid, 0.5, 0.4);
        let traj = simulate_neumann(&p, &kernel, &init, 20.0, &IbvpNumerics::default()).unwrap();
        let report = verify_bounds(&traj, &p);
        assert!(report.positivity_ok, "min value {}", report.min_value);
        assert!(report.cap_ok, "max total {} vs bound {}", report.max_total, report.m_bound);
        assert!(
            report.reduction_ok,
            "scalar reduction gap {}",
            report.reduction_gap
        );
        assert!(report.ok);
    }

    #[test]
    fn zero_flux_closure_conserves_diffusive_mass_exactly() {
        let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
        let u: Vec<f64> = (0..101).map(|j| (j as f64 * 0.37).sin().abs() + 0.2).collect();
        let mut lap = vec![0.0; 101];
        laplacian_into(BoundaryCondition::Neumann, &u, 1.0 / grid.spacing().powi(2), &mut lap);
        let w = grid.weights();
        let flux: f64 = (0..101).map(|j| w[j] * lap[j]).sum();
        let scale: f64 = lap.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(flux.abs() <= 1e-12 * scale.max(1.0), "net flux {flux}");
    }

    #[test]
    fn envelope_is_exact_at_the_endemic_constants() {
        let p = params(5.0, 1.0);
        let eq = equilibria(&p).e2.unwrap();
        let (grid, kernel) = uniform(101);
        let init = constant_state(&grid, eq);
        let traj = simulate_neumann(&p, &kernel, &init, 5.0, &IbvpNumerics::default()).unwrap();
        let rep = envelope_check(&traj, &p).unwrap();
        assert!(rep.ok);
        // Upper and lower envelopes coincide and the solution rides them.
        let slack = rep.tol - 1e-10;
        for v in [rep.n_below_g, rep.n_above_f, rep.v_below, rep.v_above, rep.i_below, rep.i_above]
        {
            assert!(v <= -slack, "sandwich not tight to 1e-10: exceedance {v}");
        }
    }

    #[test]
    fn sandwich_holds_on_generic_runs_both_sides_of_threshold() {
        let (grid, kernel) = uniform(101);
        for k in [2.0, 5.0] {
            let p = params(k, 1.0);
            let init = perturbed_init(&grid, 0.8, 0.3);
            let traj =
                simulate_neumann(&p, &kernel, &init, 40.0, &IbvpNumerics::default()).unwrap();
            let rep = envelope_check(&traj, &p).unwrap();
            assert!(rep.ok, "sandwich broke at k = {k}: {rep:?}");
        }
        // Below threshold both infection envelopes collapse to zero, and
        // the solution goes with them.
        let p = params(2.0, 1.0);
        let init = perturbed_init(&grid, 0.8, 0.3);
        let traj = simulate_neumann(&p, &kernel, &init, 60.0, &IbvpNumerics::default()).unwrap();
        let sup_i = traj.final_state().i.iter().cloned().fold(0.0f64, f64::max);
        assert!(sup_i < 1e-3);
    }

    #[test]
    fn mesh_refinement_is_second_order_on_the_terminal_state() {
        let p = params(5.0, 1.0);
        let horizon = 5.0;
        let run = |n: usize| {
            let (grid, kernel) = uniform(n);
            let init = perturbed_init(&grid, 0.5, 0.4);
            // Fixed dt across resolutions isolates the spatial error.
            let numerics = IbvpNumerics { dt: Some(1e-5), ..Default::default() };
            simulate_neumann(&p, &kernel, &init, horizon, &numerics).unwrap()
        };
        let coarse = run(51);
        let medium = run(101);
        let fine = run(201);
        // Shared nodes: node 2j of the finer grid is node j of the coarser.
        let diff_cm = (0..51)
            .map(|j| (coarse.final_state().i[j] - medium.final_state().i[2 * j]).abs())
            .fold(0.0f64, f64::max);
        let diff_mf = (0..101)
            .map(|j| (medium.final_state().i[j] - fine.final_state().i[2 * j]).abs())
            .fold(0.0f64, f64::max);
        let ratio = diff_cm / diff_mf;
        assert!((2.5..6.0).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn dirichlet_extinction_when_diffusion_dominates() {
        // lambda1 = d pi^2/4 - 1 > 0 at d = 1.
        let p = params(5.0, 1.0);
        let (grid, kernel) = uniform(101);
        let init = sine_init(&grid, 1.0, 0.5, 1);
        let traj = simulate_dirichlet(&p, &kernel, &init, 60.0, &IbvpNumerics::default()).unwrap();
        let w = grid.weights();
        let n_final = traj.final_state().total();
        let mass: f64 = (0..101).map(|j| w[j] * n_final[j]).sum();
        assert!(mass < 1e-8, "mass did not decay: {mass}");
        assert!(traj.stats.min_s >= -1e-12);
    }

    #[test]
    fn dirichlet_total_population_settles_on_the_scalar_steady_state() {
        let p = params(5.0, 0.01);
        let (grid, kernel) = uniform(101);
        let init = sine_init(&grid, 0.6, 0.3, 1);
        let numerics = IbvpNumerics { stop_at_steady: true, ..Default::default() };
        let traj = simulate_dirichlet(&p, &kernel, &init, 500.0, &numerics).unwrap();
        assert!(traj.stats.steady_at.is_some(), "no steady state reached");
        let tilde = match tilde_n(&p, &grid, 1e-12).unwrap() {
            TildeNOutcome::Positive(t) => t,
            TildeNOutcome::Extinct { .. } => panic!("scalar steady state must exist at d = 0.01"),
        };
        let n_final = traj.final_state().total();
        let gap = (0..101)
            .map(|j| (n_final[j] - tilde.values[j]).abs())
            .fold(0.0f64, f64::max);
        assert!(gap < 1e-6, "terminal N vs scalar steady state: {gap}");
    }

    #[test]
    fn tilde_n_reports_extinction_above_the_diffusion_gate() {
        let p = params(5.0, 1.0); // d pi^2/4 = 2.47 > a - beta = 1
        let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
        match tilde_n(&p, &grid, 1e-10).unwrap() {
            TildeNOutcome::Extinct { lambda1_local } => assert!(lambda1_local > 0.0),
            TildeNOutcome::Positive(_) => panic!("expected extinction"),
        }
    }

    #[test]
    fn tilde_n_flattens_to_the_cap_as_diffusion_vanishes() {
        let p = params(5.0, 1e-4);
        let grid = Grid1D::new(-1.0, 1.0, 401).unwrap();
        match tilde_n(&p, &grid, 1e-12).unwrap() {
            TildeNOutcome::Positive(t) => {
                let mid = t.values[200];
                assert!((mid - 1.0).abs() < 1e-3, "center value {mid}");
                assert!(t.stability_margin > 0.0);
                assert!(t.residual < 1e-9);
            }
            TildeNOutcome::Extinct { .. } => panic!("steady state must exist"),
        }
    }

    #[test]
    fn newton_and_time_marching_agree_on_tilde_n() {
        let p = params(5.0, 0.01);
        let grid = Grid1D::new(-1.0, 1.0, 101).unwrap();
        let newton = match tilde_n(&p, &grid, 1e-12).unwrap() {
            TildeNOutcome::Positive(t) => t,
            _ => panic!("steady state must exist"),
        };
        assert!(!newton.fallback_used);
        let cap = p.n_star();
        let guess = Array1::from_iter((0..101).map(|j| {
            let xi = (grid.node(j) + 1.0) / 2.0;
            cap * (std::f64::consts::PI * xi).sin()
        }));
        let marched = time_march_scalar(&p, &grid, &guess).unwrap();
        let gap = (0..101)
            .map(|j| (newton.values[j] - marched[j]).abs())
            .fold(0.0f64, f64::max);
        assert!(gap < 1e-6, "independent solvers disagree by {gap}");
    }

    #[test]
    fn existence_check_negative_case_all_probes_go_extinct() {
        let p = params(5.0, 1.0);
        let (_, kernel) = uniform(101);
        let report = existence_check(&p, &kernel, 200.0).unwrap();
        assert!(report.lambda1_local_check > 0.0);
        assert!(report.lambda1_nonlocal_check.is_none());
        assert!(!report.exists_predicted);
        assert!(!report.empirical_positive);
        assert!(report.agree);
        for probe in &report.probes {
            assert!(probe.sup_i_final < ENDEMIC_FLOOR);
        }
    }

    #[test]
    fn existence_check_positive_case_probes_settle_on_one_state() {
        let p = params(5.0, 0.01);
        let (_, kernel) = uniform(101);
        let report = existence_check(&p, &kernel, 600.0).unwrap();
        assert!(report.lambda1_local_check < 0.0);
        let nl = report.lambda1_nonlocal_check.unwrap();
        assert!(nl < 0.0, "nonlocal eigenvalue {nl}");
        assert!(report.exists_predicted);
        assert!(report.empirical_positive, "probes: {:?}", report.probes);
        assert!(report.agree);
        let gap = report.pairwise_gap.unwrap();
        assert!(gap < 1e-4, "multi-start gap {gap}");
    }
}
