//! Report JSON: validation verdicts, gain checks, certificates, safety
//! monitoring, and the fitted decay rate, under a versioned schema.

use serde::Serialize;
use stefan_core::analysis::{LambdaReport, SafetyReport};
use stefan_core::controller::{GainCheckSecond, GainCheckThird};
use stefan_core::model::{SetpointEps, Validation};
use stefan_core::solver::Termination;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub order: u8,
    pub validation: ValidationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setpoint: Option<SetpointSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_check_second: Option<GainCheckSecond>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_check_third: Option<GainCheckThird>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety: Option<SafetyReport>,
    /// Least-squares rate of `ln Phi(t)`, 1/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_fit_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_setpoint_error: Option<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct ValidationSummary {
    pub ok: bool,
    pub violations: Vec<String>,
}

impl ValidationSummary {
    pub fn from_core(v: &Validation) -> Self {
        ValidationSummary {
            ok: v.is_ok(),
            violations: v
                .violations()
                .iter()
                .map(|w| format!("{:?}: {}", w.assumption, w.message))
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SetpointSummary {
    pub s_r: f64,
    pub s_r_min: f64,
    pub admissible: bool,
    /// Which relaxation time entered the third-order bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_choice: Option<SetpointEps>,
}

/// Flattened certificate fields (matrices as row-major vectors).
#[derive(Debug, Serialize)]
pub struct CertificateSummary {
    pub lambda1: f64,
    pub kappa2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa3: Option<f64>,
    pub p: Vec<f64>,
    pub p_residual_max_eig: f64,
    pub lyapunov_inequality_ok: bool,
    pub lambda_min_eig: f64,
    pub lambda_positive_definite: bool,
    /// `S = 0` (equal gains): positivity holds for any positive weights.
    pub s_is_zero: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_test: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_test_rhs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_test_sup: Option<f64>,
}

impl CertificateSummary {
    pub fn from_core(rep: &LambdaReport) -> Self {
        let c = &rep.cert;
        CertificateSummary {
            lambda1: c.lambda1,
            kappa2: c.kappa2,
            kappa3: c.kappa3,
            p: c.p.iter().cloned().collect(),
            p_residual_max_eig: c.p_residual_max_eig,
            lyapunov_inequality_ok: c.lyap_ineq_ok,
            lambda_min_eig: c.lambda_min_eig,
            lambda_positive_definite: c.lambda_pd_ok,
            s_is_zero: rep.s_is_zero,
            closed_test: rep.closed_test.map(|s| format!("{s:?}")),
            closed_test_rhs: rep.ineq_rhs,
            closed_test_sup: rep.ineq_sup,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TerminationSummary {
    pub completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at_time: Option<f64>,
}

impl TerminationSummary {
    pub fn from_core(t: &Termination) -> Self {
        match t {
            Termination::Completed => TerminationSummary {
                completed: true,
                reason: None,
                at_time: None,
            },
            Termination::Early { reason, t } => TerminationSummary {
                completed: false,
                reason: Some(reason.clone()),
                at_time: Some(*t),
            },
        }
    }
}
