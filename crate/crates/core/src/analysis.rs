//! Backstepping transform, Lyapunov certificates, safety monitoring, and the
//! barrier-function chain diagnostics.

use crate::controller::{ControlGains, Strict, SystemMatrices};
use crate::error::AnalysisError;
use crate::model::{InitialData, Order, PhysicalParams, Relaxations, SimState};
use crate::quad;
use crate::solver::{boundary_gradients, FluxStencil, Trajectory};
use crate::tol;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Log-spaced sweep grid for the certificate weight ratio `kappa`.
pub const KAPPA_GRID: [f64; 9] = [1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8];

/// State after the backstepping change of variables.
///
/// `w` is evaluated on the solver grid by the shared trapezoid rule:
/// with `k(z) = (c/alpha) z` (where `c` is `c2` or `c3` by order) the
/// transform integral splits into tail moments,
/// `int_x^s k(x-y) u(y) dy = (c/alpha) * (x * M0(x) - M1(x))`,
/// `M0(x) = int_x^s u`, `M1(x) = int_x^s y u(y) dy`, both computed as suffix
/// trapezoid sums. The derivative uses the analytically differentiated
/// quadrature `w_x = u_x - (c/alpha) M0(x) - K^T X`, with `u_x` from the
/// solver's stencils (central in the interior, one-sided at the ends).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    /// Samples of `w` on the grid.
    pub w: Vec<f64>,
    /// Samples of `w_x` on the grid.
    pub w_x: Vec<f64>,
    /// Interface error state.
    pub x: DVector<f64>,
    /// Domain length `s` (the samples live on `[0, s]`).
    pub s: f64,
}

/// Applies the backstepping transform to a simulation state.
pub fn backstepping_transform(
    state: &SimState,
    gains: &ControlGains,
    params: &PhysicalParams,
    stencil: FluxStencil,
) -> Result<TransformedState, AnalysisError> {
    if state.order() != gains.order() {
        return Err(AnalysisError::OrderMismatch(format!(
            "state is {:?}, gains are {:?}",
            state.order(),
            gains.order()
        )));
    }
    let k_vec = gains.gain_vector(params)?;
    let c_kernel = match gains.order() {
        Order::Second => gains.c2,
        Order::Third => gains.c3.expect("validated"),
    };
    let n = state.nx();
    let s = state.s;
    let dx = s * state.dxi();
    let u: Vec<f64> = state.temp.iter().map(|t| t - params.t_melt).collect();
    let xu: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(i, ui)| state.xi[i] * s * ui)
        .collect();

    let mut m0 = Vec::new();
    let mut m1 = Vec::new();
    quad::suffix_trapezoid(&u, dx, &mut m0);
    quad::suffix_trapezoid(&xu, dx, &mut m1);

    let err = crate::model::ReferenceError::from_state(state, params.t_melt, gains.s_r);
    let ktx = k_vec.dot(&err.x);
    let coef = c_kernel / params.alpha;

    let mut w = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x_i = state.xi[i] * s;
        let integral = coef * (x_i * m0[i] - m1[i]);
        w.push(u[i] - integral - (x_i - s) * ktx);
    }

    // u_x by the solver's stencils, in physical coordinates.
    let (g0, g1) = boundary_gradients(state, stencil)?;
    let mut u_x = vec![0.0; n + 1];
    u_x[0] = g0;
    u_x[n] = g1;
    for i in 1..n {
        u_x[i] = (u[i + 1] - u[i - 1]) / (2.0 * dx);
    }
    let w_x: Vec<f64> = (0..=n).map(|i| u_x[i] - coef * m0[i] - ktx).collect();

    Ok(TransformedState {
        w,
        w_x,
        x: err.x,
        s,
    })
}

/// Solution of the interface-ODE Lyapunov equation in closed form
/// (second order): with `d1 = c1/eps`, `d2 = 1/eps + c2`,
/// `Q = diag(lambda1, kappa2*lambda1)`,
///
/// ```text
/// P = 1/2 * [ l1/d2 + d1*l2/d2 + d2*l1/d1    l1/d1              ]
///           [ l1/d1                          l1/(d1 d2) + l2/d2 ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct PSolution {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Largest eigenvalue of `P*Acl + Acl^T*P + Q` (should be ~0: the closed
    /// form solves the equality).
    pub residual_max_eig: f64,
    pub lyap_ineq_ok: bool,
    pub p_min_eig: f64,
}

pub fn solve_p(
    gains: &ControlGains,
    params: &PhysicalParams,
    lambda1: f64,
    kappa2: f64,
) -> Result<PSolution, AnalysisError> {
    let eps = params
        .relaxations
        .eps()
        .ok_or_else(|| AnalysisError::OrderMismatch("solve_p is second-order only".into()))?;
    gains.validate(params)?;
    if lambda1 < 0.0 || kappa2 < 0.0 {
        return Err(AnalysisError::DegenerateGains("lambda1/kappa2"));
    }
    let d1 = gains.c1 / eps;
    let d2 = 1.0 / eps + gains.c2;
    if d1 == 0.0 {
        return Err(AnalysisError::DegenerateGains("d1"));
    }
    if d2 == 0.0 {
        return Err(AnalysisError::DegenerateGains("d2"));
    }
    let l1 = lambda1;
    let l2 = kappa2 * lambda1;
    let p = DMatrix::from_row_slice(
        2,
        2,
        &[
            0.5 * (l1 / d2 + d1 * l2 / d2 + d2 * l1 / d1),
            0.5 * l1 / d1,
            0.5 * l1 / d1,
            0.5 * (l1 / (d1 * d2) + l2 / d2),
        ],
    );
    let q = DMatrix::from_diagonal(&nalgebra::dvector![l1, l2]);
    finish_p_solution(gains, params, p, q)
}

/// Numeric Lyapunov solve `Acl^T P + P Acl = -Q` for the third-order system
/// via the Kronecker-vectorized linear system.
pub fn solve_p_third(
    gains: &ControlGains,
    params: &PhysicalParams,
    lambda: &[f64; 3],
) -> Result<PSolution, AnalysisError> {
    if params.relaxations.order() != Order::Third {
        return Err(AnalysisError::OrderMismatch(
            "solve_p_third needs a third-order model".into(),
        ));
    }
    gains.validate(params)?;
    let sys = SystemMatrices::new(params);
    let acl = sys.closed_loop(&gains.gain_vector(params)?);
    if !SystemMatrices::is_hurwitz(&acl) {
        return Err(AnalysisError::DegenerateGains("closed loop not Hurwitz"));
    }
    let q = DMatrix::from_diagonal(&nalgebra::dvector![lambda[0], lambda[1], lambda[2]]);
    let eye = DMatrix::<f64>::identity(3, 3);
    let m = eye.kronecker(&acl.transpose()) + acl.transpose().kronecker(&eye);
    let rhs = DVector::from_column_slice((-&q).as_slice());
    let vec_p = m
        .lu()
        .solve(&rhs)
        .ok_or(AnalysisError::DegenerateGains("singular Lyapunov operator"))?;
    let mut p = DMatrix::from_column_slice(3, 3, vec_p.as_slice());
    p = 0.5 * (&p + &p.transpose());
    finish_p_solution(gains, params, p, q)
}

fn finish_p_solution(
    gains: &ControlGains,
    params: &PhysicalParams,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
) -> Result<PSolution, AnalysisError> {
    let sys = SystemMatrices::new(params);
    let acl = sys.closed_loop(&gains.gain_vector(params)?);
    let residual = &p * &acl + acl.transpose() * &p + &q;
    let residual_max_eig = symmetric_max_eig(&residual);
    let p_min_eig = -symmetric_max_eig(&(-&p));
    Ok(PSolution {
        p,
        q,
        residual_max_eig,
        lyap_ineq_ok: residual_max_eig <= tol::TOL_LYAP_RESIDUAL,
        p_min_eig,
    })
}

fn symmetric_max_eig(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn symmetric_min_eig(m: &DMatrix<f64>) -> f64 {
    -symmetric_max_eig(&(-m))
}

/// `S` of the Lyapunov gradient bound. Second order:
/// `((c1-c2)^2/beta^2) * diag(0, 1)`. Third order: `A^T K K^T A`, carrying
/// the 2x2 block `Gamma/beta^2` with `gamma1 = c3 - c1`,
/// `gamma2 = (eps1+eps2)(c3 - c2)`.
pub fn s_matrix(gains: &ControlGains, params: &PhysicalParams) -> Result<DMatrix<f64>, AnalysisError> {
    gains.validate(params)?;
    let b2 = params.beta * params.beta;
    Ok(match params.relaxations {
        Relaxations::Second { .. } => {
            let v = (gains.c1 - gains.c2).powi(2) / b2;
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, v])
        }
        Relaxations::Third { eps1, eps2 } => {
            let c3 = gains.c3.expect("validated");
            let g1 = c3 - gains.c1;
            let g2 = (eps1 + eps2) * (c3 - gains.c2);
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    g1 * g1 / b2,
                    g1 * g2 / b2,
                    0.0,
                    g1 * g2 / b2,
                    g2 * g2 / b2,
                ],
            )
        }
    })
}

/// Lyapunov certificate: `P` for the interface ODE plus the gradient-bound
/// matrix `Lambda = (alpha / (64 s_r |Q^{-1/2} P B|^2)) Q - (9 s_r^3/alpha) S`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCert {
    pub order: Order,
    pub lambda1: f64,
    pub kappa2: f64,
    /// Third weight ratio, third order only.
    pub kappa3: Option<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub s_mat: DMatrix<f64>,
    pub lambda_mat: DMatrix<f64>,
    pub p_residual_max_eig: f64,
    pub lyap_ineq_ok: bool,
    pub lambda_min_eig: f64,
    pub lambda_pd_ok: bool,
}

/// One sweep sample of the positivity inequality in `kappa2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaSample {
    pub kappa2: f64,
    /// Left side `d1^2 d2^2 / ((d2^2 + 2 d1)/kappa2 + 1/kappa2^2 + d1^2)`.
    pub lhs: f64,
    pub lambda_min_eig: f64,
}

/// Certificate search report. The sweep realizes the "sufficiently large
/// kappa2" existence argument numerically: the best certificate is the sweep
/// point with the largest minimum eigenvalue of `Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaReport {
    pub cert: LyapunovCert,
    /// Second order only: per-kappa diagnostics of the closed inequality.
    pub sweep: Vec<KappaSample>,
    /// Right side `144 s_r^4 (c1-c2)^2 / (alpha^2 eps^2)` (second order).
    pub ineq_rhs: Option<f64>,
    /// Supremum of the left side, `d2^2` (second order).
    pub ineq_sup: Option<f64>,
    /// Closed test `(1/eps + c2)^2 > rhs` (second order).
    pub closed_test: Option<Strict>,
    /// True when `S = 0` (equal gains), which makes `Lambda` a positive
    /// multiple of `Q` for any positive weights.
    pub s_is_zero: bool,
}

fn lambda_from_p(
    p: &PSolution,
    s_mat: &DMatrix<f64>,
    params: &PhysicalParams,
    s_r: f64,
) -> Result<DMatrix<f64>, AnalysisError> {
    let sys_b = SystemMatrices::new(params).b;
    let pb = &p.p * &sys_b;
    // |Q^{-1/2} P B|^2 with diagonal Q; a zero diagonal entry is tolerable
    // only against an exactly zero component of P B.
    let mut norm2 = 0.0;
    for i in 0..pb.len() {
        let qi = p.q[(i, i)];
        if qi > 0.0 {
            norm2 += pb[i] * pb[i] / qi;
        } else if pb[i] != 0.0 {
            return Err(AnalysisError::SingularQ);
        }
    }
    if norm2 == 0.0 {
        return Err(AnalysisError::SingularQ);
    }
    let coeff = params.alpha / (64.0 * s_r * norm2);
    Ok(coeff * &p.q - 9.0 * s_r.powi(3) / params.alpha * s_mat)
}

/// Builds `S`, sweeps the certificate weights over [`KAPPA_GRID`], and
/// reports positive definiteness of `Lambda` together with the closed
/// second-order test.
pub fn lambda_certificate(
    gains: &ControlGains,
    params: &PhysicalParams,
    lambda1: f64,
) -> Result<LambdaReport, AnalysisError> {
    if lambda1 <= 0.0 {
        return Err(AnalysisError::DegenerateGains("lambda1"));
    }
    let s_mat = s_matrix(gains, params)?;
    let s_r = gains.s_r;
    let s_is_zero = s_mat.iter().all(|&v| v == 0.0);

    match params.relaxations {
        Relaxations::Second { eps } => {
            let d1 = gains.c1 / eps;
            let d2 = 1.0 / eps + gains.c2;
            let rhs =
                144.0 * s_r.powi(4) * (gains.c1 - gains.c2).powi(2) / (params.alpha * eps).powi(2);
            let sup = d2 * d2;

            let mut sweep = Vec::with_capacity(KAPPA_GRID.len());
            let mut best: Option<(f64, PSolution, DMatrix<f64>, f64)> = None;
            for &kappa2 in &KAPPA_GRID {
                let p = solve_p(gains, params, lambda1, kappa2)?;
                let lam = lambda_from_p(&p, &s_mat, params, s_r)?;
                let min_eig = symmetric_min_eig(&lam);
                let lhs = d1 * d1 * d2 * d2
                    / ((d2 * d2 + 2.0 * d1) / kappa2 + 1.0 / (kappa2 * kappa2) + d1 * d1);
                sweep.push(KappaSample {
                    kappa2,
                    lhs,
                    lambda_min_eig: min_eig,
                });
                let better = best.as_ref().is_none_or(|(_, _, _, b)| min_eig > *b);
                if better {
                    best = Some((kappa2, p, lam, min_eig));
                }
            }
            let (kappa2, p, lam, min_eig) = best.expect("grid is non-empty");
            let cert = LyapunovCert {
                order: Order::Second,
                lambda1,
                kappa2,
                kappa3: None,
                lambda_pd_ok: min_eig > 0.0,
                lambda_min_eig: min_eig,
                p_residual_max_eig: p.residual_max_eig,
                lyap_ineq_ok: p.lyap_ineq_ok,
                p: p.p,
                q: p.q,
                s_mat,
                lambda_mat: lam,
            };
            Ok(LambdaReport {
                cert,
                sweep,
                ineq_rhs: Some(rhs),
                ineq_sup: Some(sup),
                closed_test: Some(Strict::less(rhs, sup)),
                s_is_zero,
            })
        }
        Relaxations::Third { .. } => {
            // Numerical positivity search over (kappa2, kappa3). The equal
            // gains case has S = 0 and succeeds immediately.
            let mut best: Option<(f64, f64, PSolution, DMatrix<f64>, f64)> = None;
            for &kappa2 in &KAPPA_GRID {
                for &kappa3 in &KAPPA_GRID {
                    let p = solve_p_third(gains, params, &[lambda1, kappa2 * lambda1, kappa3 * lambda1])?;
                    let lam = lambda_from_p(&p, &s_mat, params, s_r)?;
                    let min_eig = symmetric_min_eig(&lam);
                    let better = best.as_ref().is_none_or(|(_, _, _, _, b)| min_eig > *b);
                    if better {
                        best = Some((kappa2, kappa3, p, lam, min_eig));
                    }
                }
            }
            let (kappa2, kappa3, p, lam, min_eig) = best.expect("grid is non-empty");
            let cert = LyapunovCert {
                order: Order::Third,
                lambda1,
                kappa2,
                kappa3: Some(kappa3),
                lambda_pd_ok: min_eig > 0.0,
                lambda_min_eig: min_eig,
                p_residual_max_eig: p.residual_max_eig,
                lyap_ineq_ok: p.lyap_ineq_ok,
                p: p.p,
                q: p.q,
                s_mat,
                lambda_mat: lam,
            };
            Ok(LambdaReport {
                cert,
                sweep: Vec::new(),
                ineq_rhs: None,
                ineq_sup: None,
                closed_test: None,
                s_is_zero,
            })
        }
    }
}

/// Best-effort certificate with the normalized weight `lambda1 = 1`
/// (certificates are scale-invariant in `Q` up to positive scaling).
pub fn default_certificate(
    gains: &ControlGains,
    params: &PhysicalParams,
) -> Result<LyapunovCert, AnalysisError> {
    Ok(lambda_certificate(gains, params, 1.0)?.cert)
}

/// Values of the Lyapunov functionals at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovValues {
    /// `3/(4 s_r^2) ||w||^2 + 1/2 ||w_x||^2 + X^T P X`; needs a certificate.
    pub v: Option<f64>,
    /// `||w||^2 + ||w_x||^2 + X^T X`.
    pub phi: f64,
}

pub fn lyapunov_values(
    transformed: &TransformedState,
    cert: Option<&LyapunovCert>,
    s_r: f64,
) -> LyapunovValues {
    let n = transformed.w.len() - 1;
    let dx = transformed.s / n as f64;
    let w2: Vec<f64> = transformed.w.iter().map(|v| v * v).collect();
    let wx2: Vec<f64> = transformed.w_x.iter().map(|v| v * v).collect();
    let norm_w2 = quad::trapezoid(&w2, dx);
    let norm_wx2 = quad::trapezoid(&wx2, dx);
    let xtx = transformed.x.dot(&transformed.x);
    let phi = norm_w2 + norm_wx2 + xtx;
    let v = cert.map(|c| {
        let xpx = (transformed.x.transpose() * &c.p * &transformed.x)[(0, 0)];
        3.0 / (4.0 * s_r * s_r) * norm_w2 + 0.5 * norm_wx2 + xpx
    });
    LyapunovValues { v, phi }
}

/// Constraints tracked by the safety monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    /// `T(x,t) >= T_m`.
    TempValid,
    /// `0 < s(t) < L`.
    InterfaceValid,
    /// `qc(t) >= 0`.
    QcNonneg,
    /// `s_dot(t) >= 0`.
    SdotNonneg,
    /// `s0 <= s(t) <= s_r`.
    SBounds,
    /// `s_dot(t) >= v0 e^{-t/eps}` (second order).
    SdotGronwall,
    /// `eps1 s_ddot + s_dot >= 0` (third order).
    H2Nonneg,
}

/// Per-constraint verdict. Margins are signed distances with positive = safe;
/// `satisfied` applies the constraint's tolerance to the worst margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintVerdict {
    pub name: ConstraintKind,
    pub satisfied: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SafetyReport {
    pub constraints: Vec<ConstraintVerdict>,
    pub all_satisfied: bool,
}

impl SafetyReport {
    pub fn get(&self, kind: ConstraintKind) -> Option<&ConstraintVerdict> {
        self.constraints.iter().find(|c| c.name == kind)
    }
}

fn scan_constraint(
    name: ConstraintKind,
    tol: f64,
    samples: impl Iterator<Item = (f64, f64)>,
) -> ConstraintVerdict {
    let mut worst = f64::INFINITY;
    let mut worst_time = 0.0;
    let mut first_violation = None;
    for (t, margin) in samples {
        if margin < worst {
            worst = margin;
            worst_time = t;
        }
        if margin < -tol && first_violation.is_none() {
            first_violation = Some(t);
        }
    }
    ConstraintVerdict {
        name,
        satisfied: first_violation.is_none(),
        worst_margin: worst,
        worst_time,
        first_violation,
    }
}

/// Evaluates every validity and safety constraint along a trajectory,
/// including the velocity lower bound `s_dot >= v0 e^{-t/eps}` implied by a
/// non-negative heat input (second order), and the barrier value
/// `h2 = eps1 s_ddot + s_dot` (third order).
pub fn safety_monitor(
    trajectory: &Trajectory,
    data: &InitialData,
    params: &PhysicalParams,
    gains: Option<&ControlGains>,
) -> SafetyReport {
    let recs = &trajectory.records;
    let qc_scale = recs.iter().map(|r| r.qc.abs()).fold(0.0f64, f64::max);
    let tol_qc = tol::TOL_QC_REL * qc_scale;

    let mut constraints = vec![
        scan_constraint(
            ConstraintKind::TempValid,
            tol::TOL_TEMP,
            recs.iter().map(|r| (r.t, r.min_temp - params.t_melt)),
        ),
        scan_constraint(
            ConstraintKind::InterfaceValid,
            0.0,
            recs.iter()
                .map(|r| (r.t, r.s.min(params.length - r.s))),
        ),
        scan_constraint(
            ConstraintKind::QcNonneg,
            tol_qc,
            recs.iter().map(|r| (r.t, r.qc)),
        ),
        scan_constraint(
            ConstraintKind::SdotNonneg,
            tol::TOL_MONO,
            recs.iter().map(|r| (r.t, r.s_dot)),
        ),
    ];

    if let Some(g) = gains {
        constraints.push(scan_constraint(
            ConstraintKind::SBounds,
            tol::TOL_SBOUND,
            recs.iter()
                .map(|r| (r.t, (r.s - data.s0).min(g.s_r - r.s))),
        ));
    }

    match params.relaxations {
        Relaxations::Second { eps } => {
            constraints.push(scan_constraint(
                ConstraintKind::SdotGronwall,
                tol::TOL_MONO,
                recs.iter()
                    .map(|r| (r.t, r.s_dot - data.v0 * (-r.t / eps).exp())),
            ));
        }
        Relaxations::Third { eps1, .. } => {
            constraints.push(scan_constraint(
                ConstraintKind::H2Nonneg,
                tol::TOL_MONO,
                recs.iter()
                    .map(|r| (r.t, eps1 * r.s_ddot.unwrap_or(f64::NAN) + r.s_dot)),
            ));
        }
    }

    let all_satisfied = constraints.iter().all(|c| c.satisfied);
    SafetyReport {
        constraints,
        all_satisfied,
    }
}

/// Barrier values of the third-order chain: `h1 = s_dot`,
/// `h2 = eps1 s_ddot + s_dot`.
pub fn cbf_chain(state: &SimState, params: &PhysicalParams) -> Result<(f64, f64), AnalysisError> {
    let (eps1, _) = params
        .relaxations
        .pair()
        .ok_or_else(|| AnalysisError::OrderMismatch("barrier chain is third-order only".into()))?;
    let a = state.s_ddot.ok_or_else(|| {
        AnalysisError::OrderMismatch("state carries no s_ddot".into())
    })?;
    Ok((state.s_dot, eps1 * a + state.s_dot))
}

/// Residual of the outer barrier equation `eps2 h2' + h2 + beta T_x(s,t) = 0`
/// along a third-order trajectory, using central differences in time and the
/// solver stencil for the gradient. Only records carrying snapshots enter.
pub fn cbf_chain_residual(
    trajectory: &Trajectory,
    params: &PhysicalParams,
    stencil: FluxStencil,
) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let (eps1, eps2) = params
        .relaxations
        .pair()
        .ok_or_else(|| AnalysisError::OrderMismatch("barrier chain is third-order only".into()))?;
    let recs = &trajectory.records;
    if recs.len() < 3 {
        return Err(AnalysisError::TrajectoryTooShort {
            need: 3,
            got: recs.len(),
        });
    }
    let h2 = |r: &crate::solver::Record| -> Option<f64> {
        Some(eps1 * r.s_ddot? + r.s_dot)
    };
    let mut out = Vec::new();
    for w in recs.windows(3) {
        let (Some(h2m), Some(h2c), Some(h2p)) = (h2(&w[0]), h2(&w[1]), h2(&w[2])) else {
            continue;
        };
        let Some(temp) = w[1].temp.as_ref() else {
            continue;
        };
        let dt0 = w[1].t - w[0].t;
        let dt1 = w[2].t - w[1].t;
        if (dt1 - dt0).abs() > 1e-9 * dt0.max(1.0) {
            continue;
        }
        let n = temp.len() - 1;
        let state = SimState {
            t: w[1].t,
            xi: (0..=n).map(|i| i as f64 / n as f64).collect(),
            temp: temp.clone(),
            s: w[1].s,
            s_dot: w[1].s_dot,
            s_ddot: w[1].s_ddot,
        };
        let (_, grad_s) = boundary_gradients(&state, stencil)?;
        let h2dot = (h2p - h2m) / (dt0 + dt1);
        out.push((w[1].t, eps2 * h2dot + h2c + params.beta * grad_s));
    }
    Ok(out)
}

/// Least-squares fit of `ln y = intercept + rate * t` over the positive
/// samples. Returns `None` with fewer than two usable points.
pub fn log_linear_fit(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, y)| *y > 0.0)
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let rate = (n * sxy - sx * sy) / denom;
    let intercept = (sy - rate * sx) / n;
    Some((rate, intercept))
}
