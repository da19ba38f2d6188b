//! Domain types, unit conventions, initial-data validation, and setpoint
//! admissibility bounds.
//!
//! All quantities are SI internally (m, s, K, W). The melting temperature may
//! be carried in any consistent absolute scale; only differences `T - T_m`
//! enter the dynamics.

use crate::error::ModelError;
use crate::quad;
use crate::tol;
use serde::{Deserialize, Serialize};

/// Order of the interface dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// `eps * s'' = -s' - beta * T_x(s,t)`
    Second,
    /// `eps1*eps2*s''' + (eps1+eps2)*s'' = -s' - beta * T_x(s,t)`
    Third,
}

/// Relaxation times of the interface response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Relaxations {
    Second { eps: f64 },
    Third { eps1: f64, eps2: f64 },
}

impl Relaxations {
    pub fn order(&self) -> Order {
        match self {
            Relaxations::Second { .. } => Order::Second,
            Relaxations::Third { .. } => Order::Third,
        }
    }

    /// The single relaxation time of the second-order model.
    pub fn eps(&self) -> Option<f64> {
        match self {
            Relaxations::Second { eps } => Some(*eps),
            Relaxations::Third { .. } => None,
        }
    }

    pub fn pair(&self) -> Option<(f64, f64)> {
        match self {
            Relaxations::Second { .. } => None,
            Relaxations::Third { eps1, eps2 } => Some((*eps1, *eps2)),
        }
    }
}

/// Which relaxation time stands in for the single `eps` inside the
/// third-order setpoint bound. The third-order model has two relaxation
/// times but the bound takes one; the choice is configurable and reported,
/// never silently assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetpointEps {
    /// `eps1`, the relaxation appearing in the first barrier-chain equation.
    #[default]
    Eps1,
    Eps2,
    Sum,
}

impl SetpointEps {
    pub fn resolve(&self, eps1: f64, eps2: f64) -> f64 {
        match self {
            SetpointEps::Eps1 => eps1,
            SetpointEps::Eps2 => eps2,
            SetpointEps::Sum => eps1 + eps2,
        }
    }
}

/// Thermophysical constants of the liquid phase plus the interface response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Thermal diffusivity, m^2/s.
    pub alpha: f64,
    /// Interface-response coefficient, m^2/(s K).
    pub beta: f64,
    /// Thermal conductivity, W/(m K).
    pub k_cond: f64,
    /// Melting temperature, K (or degrees C, used consistently).
    pub t_melt: f64,
    /// Material length, m.
    pub length: f64,
    /// Relaxation time(s) of the interface dynamics.
    pub relaxations: Relaxations,
}

impl PhysicalParams {
    /// Checks strict positivity of all constants and that the relaxations
    /// match the requested order. A relaxation degenerating to zero is
    /// rejected: the classical first-order limit is out of scope here.
    pub fn validate(&self, order: Order) -> Result<(), ModelError> {
        let pos = |name: &'static str, value: f64| {
            // NaN fails the finiteness check, so it is rejected too.
            if value <= 0.0 || !value.is_finite() {
                Err(ModelError::NonPositiveParameter { name, value })
            } else {
                Ok(())
            }
        };
        pos("alpha", self.alpha)?;
        pos("beta", self.beta)?;
        pos("k_cond", self.k_cond)?;
        pos("length", self.length)?;
        if !self.t_melt.is_finite() {
            return Err(ModelError::NonFinite {
                context: "t_melt",
                value: self.t_melt,
            });
        }
        if self.relaxations.order() != order {
            return Err(ModelError::RelaxationOrderMismatch { order });
        }
        match self.relaxations {
            Relaxations::Second { eps } => pos("eps", eps),
            Relaxations::Third { eps1, eps2 } => {
                pos("eps1", eps1)?;
                pos("eps2", eps2)
            }
        }
    }
}

/// Initial temperature profile on `[0, s0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TempProfile {
    /// `T0(x) = T_m + t0_bar * (1 - x/s0)`: stored parametrically and sampled
    /// lazily, so quadrature on it is exact to rounding.
    Linear { t0_bar: f64 },
    /// Tabulated `(x, T)` samples; must be sorted, strictly increasing, and
    /// span `[0, s0]`.
    Table { x: Vec<f64>, temp: Vec<f64> },
}

impl TempProfile {
    /// Temperature at position `x` in `[0, s0]`; linear interpolation for
    /// tabulated profiles.
    pub fn eval(&self, x: f64, s0: f64, t_melt: f64) -> f64 {
        match self {
            TempProfile::Linear { t0_bar } => t_melt + t0_bar * (1.0 - x / s0),
            TempProfile::Table { x: xs, temp } => {
                if xs.is_empty() {
                    return t_melt;
                }
                if x <= xs[0] {
                    return temp[0];
                }
                if x >= xs[xs.len() - 1] {
                    return temp[temp.len() - 1];
                }
                let j = xs.partition_point(|&xi| xi <= x).min(xs.len() - 1);
                let (x0, x1) = (xs[j - 1], xs[j]);
                let w = (x - x0) / (x1 - x0);
                temp[j - 1] * (1.0 - w) + temp[j] * w
            }
        }
    }

    /// `int_0^{s0} (T0(x) - T_m) dx` by the module's trapezoid rule. For a
    /// linear profile the rule is exact, so the closed form is used directly.
    pub fn surplus_integral(&self, s0: f64, t_melt: f64) -> f64 {
        match self {
            TempProfile::Linear { t0_bar } => 0.5 * t0_bar * s0,
            TempProfile::Table { x, temp } => {
                let u: Vec<f64> = temp.iter().map(|t| t - t_melt).collect();
                quad::trapezoid_irregular(x, &u)
            }
        }
    }

    fn check_wellformed(&self, s0: f64) -> Result<(), ModelError> {
        match self {
            TempProfile::Linear { t0_bar } => {
                if !t0_bar.is_finite() {
                    return Err(ModelError::NonFinite {
                        context: "t0_bar",
                        value: *t0_bar,
                    });
                }
                Ok(())
            }
            TempProfile::Table { x, temp } => {
                if x.is_empty() || temp.is_empty() {
                    return Err(ModelError::EmptyProfile);
                }
                if x.len() != temp.len() {
                    return Err(ModelError::BadProfileAbscissae);
                }
                for &v in x.iter().chain(temp.iter()) {
                    if !v.is_finite() {
                        return Err(ModelError::NonFinite {
                            context: "profile sample",
                            value: v,
                        });
                    }
                }
                let sorted = x.windows(2).all(|w| w[0] < w[1]);
                let spans = x[0].abs() <= 1e-12 * s0.max(1.0)
                    && (x[x.len() - 1] - s0).abs() <= 1e-12 * s0.max(1.0);
                if !sorted || !spans {
                    return Err(ModelError::BadProfileAbscissae);
                }
                Ok(())
            }
        }
    }
}

/// Initial conditions of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    /// Initial interface position, m.
    pub s0: f64,
    /// Initial interface velocity, m/s.
    pub v0: f64,
    /// Initial interface acceleration, m/s^2 (third order only). Absence
    /// with a third-order model is a validation error, never defaulted.
    pub a0: Option<f64>,
    pub profile: TempProfile,
}

/// The admissibility assumptions on initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// `0 < s0 < L`.
    InterfaceInDomain,
    /// `T0(x) >= T_m` on `[0, s0]`.
    ProfileAboveMelt,
    /// `T0(s0) = T_m`.
    BoundaryCompatibility,
    /// `v0 >= 0`.
    NonNegativeVelocity,
    /// Third order: `a0` present and `a0 >= -v0/eps1`.
    InitialAcceleration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub assumption: Assumption,
    pub offending_value: f64,
    pub message: String,
}

/// Verdict of [`validate_initial`]: either everything holds or the full list
/// of violated assumptions with the offending values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Validation {
    Ok,
    Violated(Vec<Violation>),
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Validation::Ok => &[],
            Validation::Violated(v) => v,
        }
    }
}

/// Checks the initial-data assumptions for the requested order and returns
/// every violation. A pure predicate: equal inputs give equal verdicts.
pub fn validate_initial(
    data: &InitialData,
    params: &PhysicalParams,
    order: Order,
) -> Result<Validation, ModelError> {
    params.validate(order)?;
    if !data.s0.is_finite() {
        return Err(ModelError::NonFinite {
            context: "s0",
            value: data.s0,
        });
    }
    if !data.v0.is_finite() {
        return Err(ModelError::NonFinite {
            context: "v0",
            value: data.v0,
        });
    }
    data.profile.check_wellformed(data.s0)?;

    let mut violations = Vec::new();
    if !(data.s0 > 0.0 && data.s0 < params.length) {
        violations.push(Violation {
            assumption: Assumption::InterfaceInDomain,
            offending_value: data.s0,
            message: format!("s0 = {} outside (0, {})", data.s0, params.length),
        });
    }

    let (min_surplus, min_at) = profile_min_surplus(&data.profile, data.s0, params.t_melt);
    if min_surplus < -tol::TOL_BC {
        violations.push(Violation {
            assumption: Assumption::ProfileAboveMelt,
            offending_value: min_surplus,
            message: format!("T0({min_at}) - T_m = {min_surplus} < 0"),
        });
    }
    let boundary_mismatch = data.profile.eval(data.s0, data.s0, params.t_melt) - params.t_melt;
    if boundary_mismatch.abs() > tol::TOL_BC {
        violations.push(Violation {
            assumption: Assumption::BoundaryCompatibility,
            offending_value: boundary_mismatch,
            message: format!("T0(s0) - T_m = {boundary_mismatch}"),
        });
    }

    if data.v0 < 0.0 {
        violations.push(Violation {
            assumption: Assumption::NonNegativeVelocity,
            offending_value: data.v0,
            message: format!("v0 = {} < 0", data.v0),
        });
    }

    if order == Order::Third {
        let (eps1, _) = params.relaxations.pair().expect("validated above");
        match data.a0 {
            None => violations.push(Violation {
                assumption: Assumption::InitialAcceleration,
                offending_value: f64::NAN,
                message: "a0 missing for a third-order model".to_string(),
            }),
            Some(a0) if !a0.is_finite() => {
                return Err(ModelError::NonFinite {
                    context: "a0",
                    value: a0,
                })
            }
            Some(a0) => {
                let bound = -data.v0 / eps1;
                if a0 < bound {
                    violations.push(Violation {
                        assumption: Assumption::InitialAcceleration,
                        offending_value: a0,
                        message: format!("a0 = {a0} < -v0/eps1 = {bound}"),
                    });
                }
            }
        }
    }

    Ok(if violations.is_empty() {
        Validation::Ok
    } else {
        Validation::Violated(violations)
    })
}

fn profile_min_surplus(profile: &TempProfile, s0: f64, t_melt: f64) -> (f64, f64) {
    match profile {
        // Linear in x: the minimum sits at an endpoint.
        TempProfile::Linear { t0_bar } => {
            if *t0_bar >= 0.0 {
                (0.0, s0)
            } else {
                (*t0_bar, 0.0)
            }
        }
        TempProfile::Table { x, temp } => {
            let mut min = f64::INFINITY;
            let mut at = 0.0;
            for (&xi, &ti) in x.iter().zip(temp) {
                if ti - t_melt < min {
                    min = ti - t_melt;
                    at = xi;
                }
            }
            (min, at)
        }
    }
}

/// Lower bound on admissible setpoints for the second-order model:
/// `s0 + eps*v0 + (beta/alpha) * int_0^{s0} (T0 - T_m) dx`.
pub fn min_setpoint_second(data: &InitialData, params: &PhysicalParams) -> Result<f64, ModelError> {
    params.validate(Order::Second)?;
    let eps = params.relaxations.eps().expect("validated above");
    let surplus = data.profile.surplus_integral(data.s0, params.t_melt);
    Ok(data.s0 + eps * data.v0 + params.beta / params.alpha * surplus)
}

/// Lower bound on admissible setpoints for the third-order model:
/// `s0 + (c2/c1) * (eps*v0 + (beta/alpha) * int (T0 - T_m) dx)` where `eps`
/// is selected by `eps_choice` (see [`SetpointEps`]).
pub fn min_setpoint_third(
    data: &InitialData,
    params: &PhysicalParams,
    c1: f64,
    c2: f64,
    eps_choice: SetpointEps,
) -> Result<f64, ModelError> {
    params.validate(Order::Third)?;
    if !(c1 > 0.0 && c1 <= c2) {
        return Err(ModelError::GainPrecondition(format!(
            "need 0 < c1 <= c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let (eps1, eps2) = params.relaxations.pair().expect("validated above");
    let eps = eps_choice.resolve(eps1, eps2);
    let surplus = data.profile.surplus_integral(data.s0, params.t_melt);
    Ok(data.s0 + c2 / c1 * (eps * data.v0 + params.beta / params.alpha * surplus))
}

/// Full simulation state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Time, s.
    pub t: f64,
    /// `nx + 1` uniform samples of the normalized coordinate `xi = x/s(t)`.
    pub xi: Vec<f64>,
    /// Temperature samples `T(xi*s(t), t)`, aligned with `xi`. The last
    /// sample is pinned to `t_melt`.
    pub temp: Vec<f64>,
    /// Interface position, m.
    pub s: f64,
    /// Interface velocity, m/s.
    pub s_dot: f64,
    /// Interface acceleration, m/s^2; present only for third-order runs.
    pub s_ddot: Option<f64>,
}

impl SimState {
    /// Samples the initial data onto a fresh grid of `nx` cells.
    pub fn init(data: &InitialData, params: &PhysicalParams, nx: usize, order: Order) -> Self {
        let xi: Vec<f64> = (0..=nx).map(|i| i as f64 / nx as f64).collect();
        let mut temp: Vec<f64> = xi
            .iter()
            .map(|&z| data.profile.eval(z * data.s0, data.s0, params.t_melt))
            .collect();
        temp[nx] = params.t_melt;
        SimState {
            t: 0.0,
            xi,
            temp,
            s: data.s0,
            s_dot: data.v0,
            s_ddot: match order {
                Order::Second => None,
                Order::Third => data.a0,
            },
        }
    }

    pub fn order(&self) -> Order {
        if self.s_ddot.is_some() {
            Order::Third
        } else {
            Order::Second
        }
    }

    pub fn nx(&self) -> usize {
        self.xi.len() - 1
    }

    /// Grid spacing in the normalized coordinate.
    pub fn dxi(&self) -> f64 {
        1.0 / self.nx() as f64
    }

    /// `int_0^{s} (T - T_m) dx` by the shared trapezoid rule.
    pub fn surplus_integral(&self, t_melt: f64) -> f64 {
        let u: Vec<f64> = self.temp.iter().map(|t| t - t_melt).collect();
        self.s * quad::trapezoid(&u, self.dxi())
    }
}

/// Reference-error variables `u = T - T_m` and the interface error state
/// `X = (s - s_r, s_dot[, s_ddot])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceError {
    pub u: Vec<f64>,
    pub x: nalgebra::DVector<f64>,
}

impl ReferenceError {
    pub fn from_state(state: &SimState, t_melt: f64, s_r: f64) -> Self {
        let u = state.temp.iter().map(|t| t - t_melt).collect();
        let x = match state.s_ddot {
            None => nalgebra::dvector![state.s - s_r, state.s_dot],
            Some(a) => nalgebra::dvector![state.s - s_r, state.s_dot, a],
        };
        ReferenceError { u, x }
    }
}
