//! Backstepping gain kernels, the explicit boundary heat-flux control laws
//! for second- and third-order interface dynamics, and the gain/setpoint
//! admissibility checks.

use crate::error::ModelError;
use crate::model::{
    min_setpoint_second, min_setpoint_third, InitialData, Order, PhysicalParams, Relaxations,
    SetpointEps, SimState,
};
use crate::solver::Trajectory;
use crate::tol;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Control gains and setpoint. The gain vector `K` is always derived from
/// `(c1, c2, c3, relaxations, beta)`; it is never stored independently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlGains {
    /// Gain on the position error, 1/s.
    pub c1: f64,
    /// Gain on the interface velocity, 1/s.
    pub c2: f64,
    /// Gain on the interface acceleration (third order only), 1/s.
    pub c3: Option<f64>,
    /// Setpoint, m.
    pub s_r: f64,
}

impl ControlGains {
    pub fn second(c1: f64, c2: f64, s_r: f64) -> Self {
        ControlGains {
            c1,
            c2,
            c3: None,
            s_r,
        }
    }

    pub fn third(c1: f64, c2: f64, c3: f64, s_r: f64) -> Self {
        ControlGains {
            c1,
            c2,
            c3: Some(c3),
            s_r,
        }
    }

    pub fn order(&self) -> Order {
        if self.c3.is_some() {
            Order::Third
        } else {
            Order::Second
        }
    }

    pub fn validate(&self, params: &PhysicalParams) -> Result<(), ModelError> {
        if self.c1 <= 0.0 || self.c1.is_nan() {
            return Err(ModelError::GainPrecondition(format!(
                "c1 must be > 0, got {}",
                self.c1
            )));
        }
        for (name, v) in [("c2", Some(self.c2)), ("c3", self.c3), ("s_r", Some(self.s_r))] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(ModelError::NonFinite {
                        context: match name {
                            "c2" => "c2",
                            "c3" => "c3",
                            _ => "s_r",
                        },
                        value: v,
                    });
                }
            }
        }
        if self.order() != params.relaxations.order() {
            return Err(ModelError::RelaxationOrderMismatch {
                order: self.order(),
            });
        }
        Ok(())
    }

    /// The backstepping gain vector:
    /// second order `K = (1/beta) * (c1, eps*c2)`,
    /// third order `K = (1/beta) * (c1, (eps1+eps2)*c2, eps1*eps2*c3)`.
    pub fn gain_vector(&self, params: &PhysicalParams) -> Result<DVector<f64>, ModelError> {
        self.validate(params)?;
        let b = 1.0 / params.beta;
        Ok(match params.relaxations {
            Relaxations::Second { eps } => {
                nalgebra::dvector![b * self.c1, b * eps * self.c2]
            }
            Relaxations::Third { eps1, eps2 } => {
                let c3 = self.c3.expect("validated above");
                nalgebra::dvector![
                    b * self.c1,
                    b * (eps1 + eps2) * self.c2,
                    b * eps1 * eps2 * c3
                ]
            }
        })
    }
}

/// State matrices `A`, `B` of the reference-error interface ODE
/// `X' = A X + B u_x(s(t), t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl SystemMatrices {
    pub fn new(params: &PhysicalParams) -> Self {
        match params.relaxations {
            Relaxations::Second { eps } => SystemMatrices {
                a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0 / eps]),
                b: nalgebra::dvector![0.0, -params.beta / eps],
            },
            Relaxations::Third { eps1, eps2 } => SystemMatrices {
                a: DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        0.0,
                        1.0,
                        0.0,
                        0.0,
                        0.0,
                        1.0,
                        0.0,
                        -1.0 / (eps1 * eps2),
                        -(1.0 / eps1 + 1.0 / eps2),
                    ],
                ),
                b: nalgebra::dvector![0.0, 0.0, -params.beta / (eps1 * eps2)],
            },
        }
    }

    /// `A + B K^T`.
    pub fn closed_loop(&self, k: &DVector<f64>) -> DMatrix<f64> {
        &self.a + &self.b * k.transpose()
    }

    /// Numeric Hurwitz check: every eigenvalue real part strictly negative.
    pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
        m.complex_eigenvalues().iter().all(|l| l.re < 0.0)
    }
}

/// Backstepping kernel `phi(x) = K x` (a vector); `phi(0) = 0` and
/// `phi'(0) = K`.
pub fn kernel_phi(
    x: f64,
    gains: &ControlGains,
    params: &PhysicalParams,
) -> Result<DVector<f64>, ModelError> {
    Ok(gains.gain_vector(params)? * x)
}

/// Scalar backstepping kernel `k(x) = -(1/alpha) * phi(x)^T B`, which
/// collapses to `c2*x/alpha` (second order) or `c3*x/alpha` (third order)
/// because `K^T B = -c2` resp. `-c3`.
pub fn kernel_k(
    x: f64,
    gains: &ControlGains,
    params: &PhysicalParams,
) -> Result<f64, ModelError> {
    let phi = kernel_phi(x, gains, params)?;
    let sys = SystemMatrices::new(params);
    Ok(-phi.dot(&sys.b) / params.alpha)
}

/// Explicit second-order control law:
/// `qc = -(k c2/alpha) * int_0^s (T - T_m) dx - (k/beta) * (c1 (s - s_r) + c2 eps s_dot)`.
pub fn control_second(
    state: &SimState,
    params: &PhysicalParams,
    gains: &ControlGains,
) -> Result<f64, ModelError> {
    gains.validate(params)?;
    let eps = params
        .relaxations
        .eps()
        .ok_or(ModelError::RelaxationOrderMismatch {
            order: Order::Second,
        })?;
    if !state.s.is_finite() || !state.s_dot.is_finite() {
        return Err(ModelError::NonFinite {
            context: "interface state",
            value: state.s,
        });
    }
    let surplus = state.surplus_integral(params.t_melt);
    if !surplus.is_finite() {
        return Err(ModelError::NonFinite {
            context: "temperature field",
            value: surplus,
        });
    }
    let k = params.k_cond;
    Ok(-(k * gains.c2 / params.alpha) * surplus
        - (k / params.beta) * (gains.c1 * (state.s - gains.s_r) + gains.c2 * eps * state.s_dot))
}

/// Explicit third-order control law:
/// `qc = -(k c3/alpha) * int u - (k/beta) * (c1 (s-s_r) + c2 (eps1+eps2) s_dot + c3 eps1 eps2 s_ddot)`.
pub fn control_third(
    state: &SimState,
    params: &PhysicalParams,
    gains: &ControlGains,
) -> Result<f64, ModelError> {
    gains.validate(params)?;
    let (eps1, eps2) = params
        .relaxations
        .pair()
        .ok_or(ModelError::RelaxationOrderMismatch {
            order: Order::Third,
        })?;
    let c3 = gains.c3.expect("validated");
    let s_ddot = state.s_ddot.ok_or(ModelError::GainPrecondition(
        "third-order control needs s_ddot in the state".to_string(),
    ))?;
    if !state.s.is_finite() || !state.s_dot.is_finite() || !s_ddot.is_finite() {
        return Err(ModelError::NonFinite {
            context: "interface state",
            value: state.s,
        });
    }
    let surplus = state.surplus_integral(params.t_melt);
    if !surplus.is_finite() {
        return Err(ModelError::NonFinite {
            context: "temperature field",
            value: surplus,
        });
    }
    let k = params.k_cond;
    Ok(-(k * c3 / params.alpha) * surplus
        - (k / params.beta)
            * (gains.c1 * (state.s - gains.s_r)
                + gains.c2 * (eps1 + eps2) * state.s_dot
                + c3 * eps1 * eps2 * s_ddot))
}

/// Control flux for whichever order the state carries.
pub fn control(
    state: &SimState,
    params: &PhysicalParams,
    gains: &ControlGains,
) -> Result<f64, ModelError> {
    match state.order() {
        Order::Second => control_second(state, params, gains),
        Order::Third => control_third(state, params, gains),
    }
}

/// Three-way verdict for a strict inequality `value < bound`, with ties
/// (within a relative margin) reported as `Boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strict {
    Satisfied,
    Boundary,
    Violated,
}

impl Strict {
    pub fn less(value: f64, bound: f64) -> Strict {
        if bound.is_infinite() && bound > 0.0 {
            return Strict::Satisfied;
        }
        let scale = value.abs().max(bound.abs()).max(f64::MIN_POSITIVE);
        if (value - bound).abs() <= tol::REL_MARGIN * scale {
            Strict::Boundary
        } else if value < bound {
            Strict::Satisfied
        } else {
            Strict::Violated
        }
    }

    pub fn holds(&self) -> bool {
        matches!(self, Strict::Satisfied)
    }
}

/// Which branch of the stability gain condition applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityBranch {
    /// `12 s_r^2 <= alpha*eps`: only the safety bound constrains `c2`.
    Diffusive,
    /// `12 s_r^2 > alpha*eps`: the extra bound `(alpha*eps*c1 + alpha)/(12 s_r^2 - alpha*eps)` applies.
    Mixed,
}

/// Report of the second-order gain conditions: the safety condition on
/// `(c1, c2)` and the stability condition with its two branches. Safety and
/// stability are independent findings; neither gates the other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCheckSecond {
    /// Lower setpoint bound from the initial data.
    pub s_r_min: f64,
    /// `s_r > s_r_min` (setpoint admissibility). When this fails the
    /// remaining bounds are not computed.
    pub setpoint_ok: bool,
    /// `c1 <= c2 < c1 * (1 + (s_r - s_r_min)/(s_r_min - s0))`.
    pub safety: Option<SafetyGainReport>,
    /// The stability condition including branch selection.
    pub stability: Option<StabilityGainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyGainReport {
    /// Upper bound on `c2`; `+inf` when the initial surplus is zero.
    pub c2_upper: f64,
    pub lower_ok: bool,
    pub upper: Strict,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityGainReport {
    pub branch: StabilityBranch,
    /// `c2_bar = c1 * (s_r - s_r_min)/(s_r_min - s0)`.
    pub c2_bar: f64,
    /// `min(c2_bar, (alpha*eps*c1 + alpha)/(12 s_r^2 - alpha*eps))`; only on
    /// the mixed branch.
    pub c2_bar_bar: Option<f64>,
    /// Effective upper bound `c1 + ...` for the selected branch.
    pub c2_upper: f64,
    pub upper: Strict,
    pub ok: bool,
    /// Equivalent closed test `(1/eps + c2)^2 > 144 s_r^4 (c1-c2)^2 / (alpha^2 eps^2)`.
    pub closed_test_lhs: f64,
    pub closed_test_rhs: f64,
    pub closed_test: Strict,
    /// The mixed-branch bound mixes `alpha*eps*c1` with a bare `alpha` in its
    /// numerator; implemented verbatim, flagged here.
    pub dimensional_note: Option<&'static str>,
}

/// Evaluates the second-order safety condition and the stability condition,
/// reporting every computed bound and which branch applied.
pub fn check_gains_second(
    gains: &ControlGains,
    data: &InitialData,
    params: &PhysicalParams,
) -> Result<GainCheckSecond, ModelError> {
    gains.validate(params)?;
    let eps = params
        .relaxations
        .eps()
        .ok_or(ModelError::RelaxationOrderMismatch {
            order: Order::Second,
        })?;
    let s_r_min = min_setpoint_second(data, params)?;
    let (c1, c2, s_r) = (gains.c1, gains.c2, gains.s_r);

    if s_r <= s_r_min {
        return Ok(GainCheckSecond {
            s_r_min,
            setpoint_ok: false,
            safety: None,
            stability: None,
        });
    }

    let stored = s_r_min - data.s0; // eps*v0 + (beta/alpha)*int u0: >= 0
    let headroom = s_r - s_r_min;
    let c2_bar = if stored > 0.0 {
        c1 * headroom / stored
    } else {
        f64::INFINITY
    };
    let safety_upper = c1 + c2_bar;
    let safety = SafetyGainReport {
        c2_upper: safety_upper,
        lower_ok: c1 <= c2,
        upper: Strict::less(c2, safety_upper),
        ok: c1 <= c2 && Strict::less(c2, safety_upper).holds(),
    };

    let twelve_sr2 = 12.0 * s_r * s_r;
    let alpha_eps = params.alpha * eps;
    let (branch, c2_bar_bar, stab_upper, note) = if twelve_sr2 <= alpha_eps {
        (StabilityBranch::Diffusive, None, c1 + c2_bar, None)
    } else {
        let second = (alpha_eps * c1 + params.alpha) / (twelve_sr2 - alpha_eps);
        let cbb = c2_bar.min(second);
        (
            StabilityBranch::Mixed,
            Some(cbb),
            c1 + cbb,
            Some("mixed-branch bound numerator adds alpha*eps*c1 [m^2] to alpha [m^2/s] verbatim"),
        )
    };
    let lhs = (1.0 / eps + c2).powi(2);
    let rhs = 144.0 * s_r.powi(4) * (c1 - c2).powi(2) / (params.alpha.powi(2) * eps * eps);
    let upper = Strict::less(c2, stab_upper);
    let stability = StabilityGainReport {
        branch,
        c2_bar,
        c2_bar_bar,
        c2_upper: stab_upper,
        upper,
        ok: c1 > 0.0 && c1 <= c2 && upper.holds(),
        closed_test_lhs: lhs,
        closed_test_rhs: rhs,
        closed_test: Strict::less(rhs, lhs),
        dimensional_note: note,
    };

    Ok(GainCheckSecond {
        s_r_min,
        setpoint_ok: true,
        safety: Some(safety),
        stability: Some(stability),
    })
}

/// Report of the third-order gain conditions (the `0 < c1 <= c2` requirement,
/// the setpoint bound, and the three-way window on `c3`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCheckThird {
    /// `0 < c1 <= c2`.
    pub gains12_ok: bool,
    pub s_r_min: f64,
    pub eps_choice: SetpointEps,
    pub setpoint_ok: bool,
    pub c3_window: Option<C3Window>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C3Window {
    /// `(eps1/eps2) * (c2 - c1)`.
    pub eps_ratio_term: f64,
    /// `c1 (s_r - s_r_min) / (eps1 eps2 a0 + (beta/alpha) int u0)`; `None`
    /// when the denominator vanishes (the bound is then unbounded).
    pub c3_bar: Option<f64>,
    /// `(eps2/eps1) * c2`.
    pub eps_ratio_term2: f64,
    /// `c2 + min{...}` over the finite terms above.
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// Signed margins `(c3 - c2, upper - c3)`; positive = inside.
    pub margins: (f64, f64),
    pub ok: bool,
}

/// Evaluates the third-order admissibility conditions with per-condition
/// margins.
pub fn check_gains_third(
    gains: &ControlGains,
    data: &InitialData,
    params: &PhysicalParams,
    eps_choice: SetpointEps,
) -> Result<GainCheckThird, ModelError> {
    gains.validate(params)?;
    let (eps1, eps2) = params
        .relaxations
        .pair()
        .ok_or(ModelError::RelaxationOrderMismatch {
            order: Order::Third,
        })?;
    let c3 = gains.c3.ok_or(ModelError::GainPrecondition(
        "third-order check needs c3".to_string(),
    ))?;
    let a0 = data.a0.ok_or(ModelError::GainPrecondition(
        "third-order check needs a0 in the initial data".to_string(),
    ))?;
    let (c1, c2, s_r) = (gains.c1, gains.c2, gains.s_r);

    let gains12_ok = c1 > 0.0 && c1 <= c2;
    if !gains12_ok {
        return Ok(GainCheckThird {
            gains12_ok,
            s_r_min: f64::NAN,
            eps_choice,
            setpoint_ok: false,
            c3_window: None,
        });
    }

    let s_r_min = min_setpoint_third(data, params, c1, c2, eps_choice)?;
    let setpoint_ok = s_r > s_r_min;
    if !setpoint_ok {
        return Ok(GainCheckThird {
            gains12_ok,
            s_r_min,
            eps_choice,
            setpoint_ok,
            c3_window: None,
        });
    }

    let surplus = data.profile.surplus_integral(data.s0, params.t_melt);
    let denom = eps1 * eps2 * a0 + params.beta / params.alpha * surplus;
    let c3_bar = if denom.abs() < f64::EPSILON * (eps1 * eps2 * a0.abs()).max(1e-300) || denom == 0.0
    {
        None
    } else {
        Some(c1 * (s_r - s_r_min) / denom)
    };
    let eps_ratio_term = eps1 / eps2 * (c2 - c1);
    let eps_ratio_term2 = eps2 / eps1 * c2;
    let mut min_term = eps_ratio_term.min(eps_ratio_term2);
    if let Some(cb) = c3_bar {
        min_term = min_term.min(cb);
    }
    let upper = c2 + min_term;
    let lower_ok = c2 <= c3;
    let upper_ok = c3 <= upper;
    let window = C3Window {
        eps_ratio_term,
        c3_bar,
        eps_ratio_term2,
        upper,
        lower_ok,
        upper_ok,
        margins: (c3 - c2, upper - c3),
        ok: lower_ok && upper_ok,
    };

    Ok(GainCheckThird {
        gains12_ok,
        s_r_min,
        eps_choice,
        setpoint_ok,
        c3_window: Some(window),
    })
}

/// Per-step residual of the closed-loop flux identity
/// `qc' = -c2 qc + (k/beta)(c2 - c1) s_dot` along a recorded second-order
/// trajectory, using central differences in time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluxOdeResidual {
    pub max_abs: f64,
    pub rms: f64,
    /// `(t, residual)` at interior records.
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

pub fn flux_ode_residual(
    trajectory: &Trajectory,
    gains: &ControlGains,
    params: &PhysicalParams,
) -> Result<FluxOdeResidual, crate::error::AnalysisError> {
    let recs = &trajectory.records;
    if recs.len() < 3 {
        return Err(crate::error::AnalysisError::TrajectoryTooShort {
            need: 3,
            got: recs.len(),
        });
    }
    let dt = recs[1].t - recs[0].t;
    let uniform = recs
        .windows(2)
        .all(|w| ((w[1].t - w[0].t) - dt).abs() <= 1e-9 * dt.max(1.0));
    if !uniform {
        return Err(crate::error::AnalysisError::NonUniformTime);
    }
    let kb = params.k_cond / params.beta;
    let mut samples = Vec::with_capacity(recs.len().saturating_sub(2));
    let mut max_abs: f64 = 0.0;
    let mut sq = 0.0;
    for w in recs.windows(3) {
        let qdot = (w[2].qc - w[0].qc) / (2.0 * dt);
        let rhs = -gains.c2 * w[1].qc + kb * (gains.c2 - gains.c1) * w[1].s_dot;
        let r = qdot - rhs;
        samples.push((w[1].t, r));
        max_abs = max_abs.max(r.abs());
        sq += r * r;
    }
    let rms = (sq / samples.len() as f64).sqrt();
    Ok(FluxOdeResidual {
        max_abs,
        rms,
        samples,
    })
}
