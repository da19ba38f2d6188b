//! Time integration of the coupled parabolic PDE and interface ODE under a
//! boundary heat-flux input.
//!
//! The moving domain `[0, s(t)]` is immobilized by the coordinate change
//! `xi = x/s(t)`, which maps the PDE `T_t = alpha T_xx` onto the fixed
//! interval `[0, 1]`:
//!
//! ```text
//! v_t = (alpha/s^2) v_xixi + (xi s_dot / s) v_xi,      v(xi,t) = T(xi s(t), t)
//! ```
//!
//! (chain rule with `xi_t = -xi s_dot / s` and `T_x = v_xi / s`). The flux
//! boundary condition becomes `v_xi(0,t) = -s qc(t)/k` and the far boundary
//! stays Dirichlet `v(1,t) = T_m`.
//!
//! A step advances the temperature field first (Crank-Nicolson by default,
//! with the interface geometry frozen over the step) and then advances the
//! interface ODE exactly over `dt`, holding `T_x(s(t),t)` as a constant
//! forcing; the ODE is linear in the interface rates so its one-step solution
//! is closed-form. A predictor pass supplies midpoint geometry and the
//! end-of-step flux so the coupling stays second-order accurate.

use crate::analysis::{self, LyapunovCert};
use crate::controller::{self, ControlGains};
use crate::error::{ModelError, SolverError};
use crate::model::{InitialData, Order, PhysicalParams, Relaxations, SimState};
use crate::tol;
use serde::{Deserialize, Serialize};

/// Time-integration scheme for the temperature field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    CrankNicolson,
    ExplicitEuler,
}

/// Order of the one-sided difference used for `T_x` at both boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FluxStencil {
    #[default]
    Second,
    Third,
}

impl FluxStencil {
    pub fn order(&self) -> usize {
        match self {
            FluxStencil::Second => 2,
            FluxStencil::Third => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of spatial cells on the normalized domain; >= 16.
    pub nx: usize,
    /// Time step, s.
    pub dt: f64,
    /// Simulation horizon, s.
    pub t_final: f64,
    pub scheme: Scheme,
    pub flux_stencil: FluxStencil,
    /// Full temperature snapshots are stored every `snapshot_every` records;
    /// scalar channels are stored every step.
    pub snapshot_every: usize,
}

impl SolverConfig {
    pub fn new(nx: usize, dt: f64, t_final: f64) -> Self {
        SolverConfig {
            nx,
            dt,
            t_final,
            scheme: Scheme::default(),
            flux_stencil: FluxStencil::default(),
            snapshot_every: Self::default_snapshot_every(dt),
        }
    }

    /// Default decimation: one snapshot per 0.1 s of simulated time, floored,
    /// never less than every record.
    pub fn default_snapshot_every(dt: f64) -> usize {
        ((0.1 / dt).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.nx < 16 {
            return Err(SolverError::DegenerateGrid { nx: self.nx });
        }
        if self.dt <= 0.0 || !self.dt.is_finite() || self.t_final <= 0.0 || self.t_final.is_nan() {
            return Err(SolverError::Model(ModelError::NonPositiveParameter {
                name: "dt/t_final",
                value: self.dt,
            }));
        }
        Ok(())
    }
}

/// Coefficients of the immobilized fixed-domain PDE
/// `v_t = diffusion * v_xixi + advection(xi) * v_xi` on `xi in [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedDomainCoeffs {
    /// `alpha / s^2`, 1/s per unit xi^2.
    pub diffusion: f64,
    /// `s_dot / s`; the advection coefficient at `xi` is `xi * advection_scale`.
    pub advection_scale: f64,
}

impl FixedDomainCoeffs {
    pub fn advection_at(&self, xi: f64) -> f64 {
        xi * self.advection_scale
    }
}

/// Coefficients of the immobilized equation for the given state.
pub fn fixed_domain_coefficients(
    state: &SimState,
    params: &PhysicalParams,
) -> Result<FixedDomainCoeffs, SolverError> {
    if state.s <= 0.0 || state.s.is_nan() {
        return Err(SolverError::InterfaceOutOfDomain {
            s: state.s,
            t: state.t,
        });
    }
    Ok(FixedDomainCoeffs {
        diffusion: params.alpha / (state.s * state.s),
        advection_scale: state.s_dot / state.s,
    })
}

/// One-sided estimates of the physical-space temperature gradient
/// `(T_x(0,t), T_x(s(t),t))` in K/m.
pub fn boundary_gradients(
    state: &SimState,
    stencil: FluxStencil,
) -> Result<(f64, f64), SolverError> {
    let n = state.nx();
    if n < stencil.order() + 1 {
        return Err(SolverError::DegenerateGrid { nx: n });
    }
    let d = state.dxi();
    let v = &state.temp;
    let (g0, g1) = match stencil {
        FluxStencil::Second => (
            (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * d),
            (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * d),
        ),
        FluxStencil::Third => (
            (-11.0 * v[0] + 18.0 * v[1] - 9.0 * v[2] + 2.0 * v[3]) / (6.0 * d),
            (11.0 * v[n] - 18.0 * v[n - 1] + 9.0 * v[n - 2] - 2.0 * v[n - 3]) / (6.0 * d),
        ),
    };
    Ok((g0 / state.s, g1 / state.s))
}

/// Thomas algorithm for a tridiagonal system; `diag` is consumed as scratch
/// and `rhs` is overwritten with the solution.
fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i - 1] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

/// `expm1(x)/x`, continuous through `x = 0`.
fn expm1_over(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// Exact one-step solution of the interface ODE with the gradient forcing
/// `f = -beta*T_x(s,t)` held constant over the step.
///
/// Second order: `eps v' = -v + f`.
/// Third order, as the cascade `eps1 h1' = -h1 + h2`, `eps2 h2' = -h2 + f`
/// with `h1 = s_dot`, `h2 = eps1*s_ddot + s_dot`. The position increment
/// comes from integrating the same identities, so no quadrature error enters.
fn interface_advance(
    s: f64,
    s_dot: f64,
    s_ddot: Option<f64>,
    f: f64,
    relax: &Relaxations,
    dt: f64,
) -> (f64, f64, Option<f64>) {
    match relax {
        Relaxations::Second { eps } => {
            let e = (-dt / eps).exp();
            let v_new = f + (s_dot - f) * e;
            // ds = int v dt = f*dt - eps*(v' - v), from eps*v' = -v + f.
            let ds = f * dt - eps * (v_new - s_dot);
            (s + ds, v_new, None)
        }
        Relaxations::Third { eps1, eps2 } => {
            let a = s_ddot.expect("third-order advance needs s_ddot");
            let h1 = s_dot;
            let h2 = eps1 * a + s_dot;
            let e1 = (-dt / eps1).exp();
            let e2 = (-dt / eps2).exp();
            let h2_new = f + (h2 - f) * e2;
            // (e^{-dt/eps2} - e^{-dt/eps1})/(eps2 - eps1), stable for
            // eps1 ~ eps2 via expm1.
            let delta = dt * (eps2 - eps1) / (eps1 * eps2);
            let phi = dt / (eps1 * eps2) * e1 * expm1_over(delta);
            let h1_new = f + (h1 - f) * e1 + (h2 - f) * eps2 * phi;
            let ds = f * dt - eps2 * (h2_new - h2) - eps1 * (h1_new - h1);
            let a_new = (h2_new - h1_new) / eps1;
            (s + ds, h1_new, Some(a_new))
        }
    }
}

/// Crank-Nicolson advance of the temperature field over `dt` with the
/// geometry `(s_geo, sdot_geo)` frozen. The Neumann flux is imposed by
/// second-order ghost-value elimination at `xi = 0`, with `qc_a` in the
/// explicit half and `qc_b` in the implicit half; `xi = 1` is Dirichlet.
fn advance_temp_cn(
    temp: &[f64],
    s_geo: f64,
    sdot_geo: f64,
    qc_a: f64,
    qc_b: f64,
    dt: f64,
    params: &PhysicalParams,
) -> Vec<f64> {
    let n = temp.len() - 1;
    let dxi = 1.0 / n as f64;
    let a = params.alpha / (s_geo * s_geo);
    let rho = a * dt / (dxi * dxi);

    // Work in u = T - T_m so the Dirichlet value is zero.
    let u: Vec<f64> = temp.iter().map(|t| t - params.t_melt).collect();

    let mut lower = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut rhs = vec![0.0; n];

    // Flux row: v_xi(0) = -s*qc/k eliminated through the ghost node.
    let g_a = -s_geo * qc_a / params.k_cond;
    let g_b = -s_geo * qc_b / params.k_cond;
    diag[0] = 1.0 + rho;
    upper[0] = -rho;
    rhs[0] = (1.0 - rho) * u[0] + rho * u[1] - a * dt / dxi * (g_a + g_b);

    for i in 1..n {
        let b_i = (i as f64 * dxi) * sdot_geo / s_geo;
        let sigma = b_i * dt / (4.0 * dxi);
        diag[i] = 1.0 + rho;
        if i + 1 < n {
            upper[i] = -0.5 * rho - sigma;
        }
        lower[i - 1] = -0.5 * rho + sigma;
        // u[n] = 0 in both halves, so the Dirichlet row needs no special
        // right-hand-side term.
        rhs[i] = (0.5 * rho - sigma) * u[i - 1] + (1.0 - rho) * u[i]
            + (0.5 * rho + sigma) * u[i + 1];
    }

    thomas(&lower, &mut diag, &upper, &mut rhs);

    let mut out = Vec::with_capacity(n + 1);
    for v in rhs {
        out.push(v + params.t_melt);
    }
    out.push(params.t_melt);
    out
}

/// Backward-Euler advance of the temperature field with the flux imposed at
/// the end time. Used as a startup smoother: the first Crank-Nicolson step of
/// a run is replaced by two of these half-steps, which damps the ringing that
/// CN produces on flux-incompatible initial data without affecting the
/// scheme's second-order convergence at fixed positive times.
fn advance_temp_be(
    temp: &[f64],
    s_geo: f64,
    sdot_geo: f64,
    qc_end: f64,
    dt: f64,
    params: &PhysicalParams,
) -> Vec<f64> {
    let n = temp.len() - 1;
    let dxi = 1.0 / n as f64;
    let a = params.alpha / (s_geo * s_geo);
    let rho = a * dt / (dxi * dxi);
    let u: Vec<f64> = temp.iter().map(|t| t - params.t_melt).collect();

    let mut lower = vec![0.0; n - 1];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n - 1];
    let mut rhs = vec![0.0; n];

    let g = -s_geo * qc_end / params.k_cond;
    diag[0] = 1.0 + 2.0 * rho;
    upper[0] = -2.0 * rho;
    rhs[0] = u[0] - 2.0 * a * dt / dxi * g;

    for i in 1..n {
        let b_i = (i as f64 * dxi) * sdot_geo / s_geo;
        let sigma = b_i * dt / (2.0 * dxi);
        diag[i] = 1.0 + 2.0 * rho;
        if i + 1 < n {
            upper[i] = -rho - sigma;
        }
        lower[i - 1] = -rho + sigma;
        rhs[i] = u[i];
    }

    thomas(&lower, &mut diag, &upper, &mut rhs);

    let mut out = Vec::with_capacity(n + 1);
    for v in rhs {
        out.push(v + params.t_melt);
    }
    out.push(params.t_melt);
    out
}

/// Forward-Euler advance of the temperature field (first order in time).
fn advance_temp_euler(
    temp: &[f64],
    s_geo: f64,
    sdot_geo: f64,
    qc: f64,
    dt: f64,
    params: &PhysicalParams,
) -> Vec<f64> {
    let n = temp.len() - 1;
    let dxi = 1.0 / n as f64;
    let a = params.alpha / (s_geo * s_geo);
    let u: Vec<f64> = temp.iter().map(|t| t - params.t_melt).collect();
    let g = -s_geo * qc / params.k_cond;

    let mut out = vec![params.t_melt; n + 1];
    out[0] = params.t_melt + u[0]
        + dt * (2.0 * a / (dxi * dxi) * (u[1] - u[0]) - 2.0 * a / dxi * g);
    for i in 1..n {
        let b_i = (i as f64 * dxi) * sdot_geo / s_geo;
        let lap = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dxi * dxi);
        let adv = (u[i + 1] - u[i - 1]) / (2.0 * dxi);
        out[i] = params.t_melt + u[i] + dt * (a * lap + b_i * adv);
    }
    out
}

fn check_finite(state: &SimState) -> Result<(), SolverError> {
    if state.temp.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite {
            context: "temperature field",
            t: state.t,
        });
    }
    if !state.s.is_finite()
        || !state.s_dot.is_finite()
        || state.s_ddot.is_some_and(|a| !a.is_finite())
    {
        return Err(SolverError::NonFinite {
            context: "interface state",
            t: state.t,
        });
    }
    Ok(())
}

/// Internal step with possibly different flux values at the two temporal
/// quadrature points of the Crank-Nicolson stage.
fn step_with_flux(
    state: &SimState,
    qc_a: f64,
    qc_b: f64,
    params: &PhysicalParams,
    cfg: &SolverConfig,
    dt: f64,
    startup: bool,
) -> Result<SimState, SolverError> {
    if !qc_a.is_finite() || !qc_b.is_finite() {
        return Err(SolverError::NonFinite {
            context: "flux input",
            t: state.t,
        });
    }
    check_finite(state)?;
    let (_, grad_s) = boundary_gradients(state, cfg.flux_stencil)?;

    let (new_temp, s_star) = match cfg.scheme {
        Scheme::CrankNicolson => {
            // Predictor interface advance fixes the midpoint geometry.
            let f_pred = -params.beta * grad_s;
            let (s_star, v_star, _) = interface_advance(
                state.s,
                state.s_dot,
                state.s_ddot,
                f_pred,
                &params.relaxations,
                dt,
            );
            if !s_star.is_finite() {
                return Err(SolverError::NonFinite {
                    context: "interface predictor",
                    t: state.t,
                });
            }
            let s_geo = 0.5 * (state.s + s_star);
            let sdot_geo = 0.5 * (state.s_dot + v_star);
            let temp = if startup {
                let half =
                    advance_temp_be(&state.temp, s_geo, sdot_geo, 0.5 * (qc_a + qc_b), 0.5 * dt, params);
                advance_temp_be(&half, s_geo, sdot_geo, qc_b, 0.5 * dt, params)
            } else {
                advance_temp_cn(&state.temp, s_geo, sdot_geo, qc_a, qc_b, dt, params)
            };
            (temp, s_star)
        }
        Scheme::ExplicitEuler => {
            let cfl = params.alpha * dt * (state.nx() as f64 / state.s).powi(2);
            if cfl > 0.5 {
                return Err(SolverError::CflViolation {
                    value: cfl,
                    t: state.t,
                });
            }
            (
                advance_temp_euler(&state.temp, state.s, state.s_dot, qc_a, dt, params),
                state.s,
            )
        }
    };

    let mut next = SimState {
        t: state.t + dt,
        xi: state.xi.clone(),
        temp: new_temp,
        s: state.s,
        s_dot: state.s_dot,
        s_ddot: state.s_ddot,
    };

    // Interface forcing at the step's evaluation points: trapezoid of the
    // gradient before and after the temperature advance (CN), or the
    // start-of-step gradient (explicit).
    let f_bar = match cfg.scheme {
        Scheme::CrankNicolson => {
            let scaled = SimState {
                s: s_star,
                ..next.clone()
            };
            let (_, grad_new) = boundary_gradients(&scaled, cfg.flux_stencil)?;
            -params.beta * 0.5 * (grad_s + grad_new)
        }
        Scheme::ExplicitEuler => -params.beta * grad_s,
    };
    let (s_new, v_new, a_new) = interface_advance(
        state.s,
        state.s_dot,
        state.s_ddot,
        f_bar,
        &params.relaxations,
        dt,
    );
    next.s = s_new;
    next.s_dot = v_new;
    next.s_ddot = a_new;

    check_finite(&next)?;
    if !(next.s > 0.0 && next.s < params.length) {
        return Err(SolverError::InterfaceOutOfDomain {
            s: next.s,
            t: next.t,
        });
    }
    Ok(next)
}

/// Advances the state by one step of `cfg.dt` under the boundary heat flux
/// `qc`, held constant over the step. Returns the state at `t + dt`; the
/// interface leaving `(0, L)` is reported as an error, never clamped.
pub fn step(
    state: &SimState,
    qc: f64,
    params: &PhysicalParams,
    cfg: &SolverConfig,
    order: Order,
) -> Result<SimState, SolverError> {
    params.validate(order)?;
    cfg.validate()?;
    if state.order() != order {
        return Err(SolverError::Model(ModelError::RelaxationOrderMismatch {
            order,
        }));
    }
    step_with_flux(state, qc, qc, params, cfg, cfg.dt, false)
}

/// Prescribed open-loop flux schedule: linear interpolation between the
/// tabulated points, constant extrapolation beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxSchedule {
    pub points: Vec<(f64, f64)>,
}

impl FluxSchedule {
    pub fn constant(qc: f64) -> Self {
        FluxSchedule {
            points: vec![(0.0, qc)],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() {
            return 0.0;
        }
        if t <= p[0].0 {
            return p[0].1;
        }
        if t >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let j = p.partition_point(|&(ti, _)| ti <= t);
        let (t0, q0) = p[j - 1];
        let (t1, q1) = p[j];
        let w = (t - t0) / (t1 - t0);
        q0 * (1.0 - w) + q1 * w
    }
}

/// Closed-loop feedback or a prescribed flux schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    ClosedLoop,
    OpenLoop(FluxSchedule),
}

/// Instantaneous safety flags recorded alongside each trajectory sample.
/// These are raw per-record checks; [`crate::analysis::safety_monitor`] is
/// the authority that applies the documented tolerances across a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SafetyFlags {
    pub temp_valid: bool,
    pub interface_valid: bool,
    pub qc_nonneg: bool,
    pub sdot_nonneg: bool,
    /// `s0 <= s <= s_r` within tolerance; absent for open-loop runs.
    pub s_bounds: Option<bool>,
    /// `eps1*s_ddot + s_dot >= 0` within tolerance; third order only.
    pub h2_nonneg: Option<bool>,
}

/// One trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: Option<f64>,
    /// Applied boundary heat flux at this instant, W/m^2.
    pub qc: f64,
    /// `T(0, t)`.
    pub t_boundary: f64,
    /// Minimum of the temperature field over the grid.
    pub min_temp: f64,
    /// Decimated full temperature snapshot.
    pub temp: Option<Vec<f64>>,
    /// Lyapunov function of the certificate, when one is available.
    pub v_lyap: Option<f64>,
    /// `||w||^2 + ||w_x||^2 + X^T X`.
    pub phi: Option<f64>,
    pub flags: SafetyFlags,
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Termination {
    Completed,
    /// The run stopped before the horizon; the trailing record holds the
    /// state at termination (for validity violations, the violating state,
    /// so the monitor can report it).
    Early { reason: String, t: f64 },
}

/// Time-indexed record of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub dt: f64,
    pub order: Order,
    pub s_r: Option<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("trajectory is never empty")
    }

    pub fn completed(&self) -> bool {
        matches!(self.termination, Termination::Completed)
    }
}

fn make_flags(
    state: &SimState,
    qc: f64,
    params: &PhysicalParams,
    s0: f64,
    s_r: Option<f64>,
) -> SafetyFlags {
    let min_t = state.temp.iter().cloned().fold(f64::INFINITY, f64::min);
    SafetyFlags {
        temp_valid: min_t >= params.t_melt - tol::TOL_TEMP,
        interface_valid: state.s > 0.0 && state.s < params.length,
        qc_nonneg: qc >= 0.0,
        sdot_nonneg: state.s_dot >= -tol::TOL_MONO,
        s_bounds: s_r.map(|sr| {
            state.s >= s0 - tol::TOL_SBOUND && state.s <= sr + tol::TOL_SBOUND
        }),
        h2_nonneg: match (state.s_ddot, params.relaxations.pair()) {
            (Some(a), Some((eps1, _))) => Some(eps1 * a + state.s_dot >= -tol::TOL_MONO),
            _ => None,
        },
    }
}

/// Runs a full closed-loop (or open-loop) simulation, recording every scalar
/// channel each step and decimated temperature snapshots. Terminates early
/// with a diagnostic if the state leaves the model's validity region.
pub fn simulate(
    data: &InitialData,
    params: &PhysicalParams,
    gains: Option<&ControlGains>,
    cfg: &SolverConfig,
    order: Order,
    mode: &ControlMode,
) -> Result<Trajectory, SolverError> {
    params.validate(order)?;
    cfg.validate()?;
    if matches!(mode, ControlMode::ClosedLoop) && gains.is_none() {
        return Err(SolverError::Model(ModelError::GainPrecondition(
            "closed-loop simulation needs gains".to_string(),
        )));
    }

    let mut state = SimState::init(data, params, cfg.nx, order);
    let s0 = data.s0;
    let s_r = gains.map(|g| g.s_r);

    // Certificate for the inline Lyapunov channels; closed loop only, and
    // only when the gain structure admits one.
    let cert: Option<LyapunovCert> = match (mode, gains) {
        (ControlMode::ClosedLoop, Some(g)) => analysis::default_certificate(g, params).ok(),
        _ => None,
    };

    let flux_at = |state: &SimState, t: f64| -> Result<f64, SolverError> {
        match mode {
            ControlMode::ClosedLoop => {
                controller::control(state, params, gains.expect("checked")).map_err(Into::into)
            }
            ControlMode::OpenLoop(sched) => Ok(sched.eval(t)),
        }
    };

    let n_steps = (cfg.t_final / cfg.dt).ceil() as usize;
    let mut records = Vec::with_capacity(n_steps + 1);
    let mut termination = Termination::Completed;

    let push_record = |records: &mut Vec<Record>,
                       state: &SimState,
                       qc: f64,
                       step_idx: usize,
                       cert: &Option<LyapunovCert>| {
        let snapshot = if step_idx.is_multiple_of(cfg.snapshot_every) || state.t >= cfg.t_final {
            Some(state.temp.clone())
        } else {
            None
        };
        let (v_lyap, phi) = match (gains, mode) {
            (Some(g), ControlMode::ClosedLoop) => {
                match analysis::backstepping_transform(state, g, params, cfg.flux_stencil) {
                    Ok(tr) => {
                        let vals = analysis::lyapunov_values(&tr, cert.as_ref(), g.s_r);
                        (vals.v, Some(vals.phi))
                    }
                    Err(_) => (None, None),
                }
            }
            _ => (None, None),
        };
        records.push(Record {
            t: state.t,
            s: state.s,
            s_dot: state.s_dot,
            s_ddot: state.s_ddot,
            qc,
            t_boundary: state.temp[0],
            min_temp: state.temp.iter().cloned().fold(f64::INFINITY, f64::min),
            temp: snapshot,
            v_lyap,
            phi,
            flags: make_flags(state, qc, params, s0, s_r),
        });
    };

    let mut qc_now = flux_at(&state, 0.0)?;
    push_record(&mut records, &state, qc_now, 0, &cert);

    let mut step_idx = 0usize;
    while state.t < cfg.t_final - 1e-9 * cfg.dt {
        let dt = cfg.dt.min(cfg.t_final - state.t);
        let t_next = state.t + dt;

        let qc_end = match (mode, cfg.scheme) {
            (ControlMode::OpenLoop(sched), _) => sched.eval(t_next),
            (ControlMode::ClosedLoop, Scheme::ExplicitEuler) => qc_now,
            (ControlMode::ClosedLoop, Scheme::CrankNicolson) => {
                // Predictor pass estimates the end-of-step feedback value.
                match step_with_flux(&state, qc_now, qc_now, params, cfg, dt, step_idx == 0)
                    .and_then(|pred| flux_at(&pred, t_next))
                {
                    Ok(q) => q,
                    Err(e) => {
                        termination = Termination::Early {
                            reason: e.to_string(),
                            t: state.t,
                        };
                        break;
                    }
                }
            }
        };

        match step_with_flux(&state, qc_now, qc_end, params, cfg, dt, step_idx == 0) {
            Ok(next) => state = next,
            Err(e) => {
                termination = Termination::Early {
                    reason: e.to_string(),
                    t: state.t,
                };
                break;
            }
        }
        step_idx += 1;

        let min_t = state.temp.iter().cloned().fold(f64::INFINITY, f64::min);
        let qc_next = match flux_at(&state, state.t) {
            Ok(q) => q,
            Err(e) => {
                termination = Termination::Early {
                    reason: e.to_string(),
                    t: state.t,
                };
                break;
            }
        };
        qc_now = qc_next;
        push_record(&mut records, &state, qc_now, step_idx, &cert);

        if min_t < params.t_melt - tol::TOL_TEMP {
            termination = Termination::Early {
                reason: format!(
                    "temperature fell below melting point: min T - T_m = {} at t = {}",
                    min_t - params.t_melt,
                    state.t
                ),
                t: state.t,
            };
            break;
        }
    }

    Ok(Trajectory {
        records,
        dt: cfg.dt,
        order,
        s_r,
        termination,
    })
}

/// Discrete energy-balance residuals: with
/// `E = (k/alpha) int (T - T_m) dx + (k/beta) (s + eps s_dot)` (second order,
/// the third-order variant replacing the last term by
/// `s + (eps1+eps2) s_dot + eps1 eps2 s_ddot`), the model gives `dE/dt = qc`,
/// so `E_{n+1} - E_n - int qc dt` measures pure discretization error. The
/// flux work is accumulated by trapezoid over every record between
/// consecutive snapshot-bearing records, so the residuals remain meaningful
/// for decimated trajectories.
pub fn energy_residuals(
    trajectory: &Trajectory,
    params: &PhysicalParams,
) -> Vec<(f64, f64)> {
    let k = params.k_cond;
    let energy = |r: &Record| -> Option<f64> {
        let temp = r.temp.as_ref()?;
        let dxi = 1.0 / (temp.len() - 1) as f64;
        let u: Vec<f64> = temp.iter().map(|t| t - params.t_melt).collect();
        let stored = r.s * crate::quad::trapezoid(&u, dxi);
        let interface = match params.relaxations {
            Relaxations::Second { eps } => r.s + eps * r.s_dot,
            Relaxations::Third { eps1, eps2 } => {
                r.s + (eps1 + eps2) * r.s_dot + eps1 * eps2 * r.s_ddot.unwrap_or(0.0)
            }
        };
        Some(k / params.alpha * stored + k / params.beta * interface)
    };

    let recs = &trajectory.records;
    let mut out = Vec::new();
    let mut prev_energy: Option<f64> = None;
    let mut work = 0.0;
    for i in 0..recs.len() {
        if i > 0 {
            work += 0.5 * (recs[i].t - recs[i - 1].t) * (recs[i - 1].qc + recs[i].qc);
        }
        if let Some(e) = energy(&recs[i]) {
            if let Some(e0) = prev_energy {
                out.push((recs[i].t, e - e0 - work));
            }
            prev_energy = Some(e);
            work = 0.0;
        }
    }
    out
}
