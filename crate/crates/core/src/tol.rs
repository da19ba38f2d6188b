//! Shared numerical tolerances.
//!
//! Every threshold used by validation, the solver, and the safety monitor is
//! defined here rather than inline, so the contracts stay auditable.

/// Absolute tolerance (K) for the boundary compatibility check `T0(s0) = T_m`.
/// Validation must not reject analytically exact profiles perturbed by float
/// rounding.
pub const TOL_BC: f64 = 1e-9;

/// Absolute tolerance (K) on the temperature constraint `T >= T_m`.
pub const TOL_TEMP: f64 = 1e-6;

/// Absolute tolerance (m/s) on interface-velocity positivity checks.
pub const TOL_MONO: f64 = 1e-8;

/// Absolute tolerance (K/m) on the expected sign of `T_x(s(t), t)`.
pub const TOL_GRAD: f64 = 1e-6;

/// Absolute tolerance (m) on the interface staying inside `[s0, s_r]`.
/// Allows for discretization-level overshoot near convergence.
pub const TOL_SBOUND: f64 = 1e-6;

/// Relative margin used when deciding strict inequalities from the gain and
/// setpoint conditions; values inside the margin are reported as "boundary".
pub const REL_MARGIN: f64 = 1e-12;

/// Relative factor for the control-positivity check: `qc >= -TOL_QC_REL * max|qc|`.
pub const TOL_QC_REL: f64 = 1e-9;

/// Relative factor for the target boundary condition `w(s,t) = 0`:
/// `|w(s,t)| <= TOL_TARGET_REL * max|u|`.
pub const TOL_TARGET_REL: f64 = 1e-8;

/// Per-step relative growth allowed before the Lyapunov decay check fails:
/// `Phi(t_{n+1}) <= Phi(t_n) * (1 + TOL_LYAP)`.
pub const TOL_LYAP: f64 = 1e-3;

/// Largest admissible eigenvalue of the Lyapunov-equation residual
/// `P*Acl + Acl^T*P + Q` for a certificate to count as solved.
pub const TOL_LYAP_RESIDUAL: f64 = 1e-10;
