//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one pass/fail line (run with `--nocapture` to see them on success).

use stefan_core::analysis::{self, ConstraintKind};
use stefan_core::controller::{self, ControlGains, Strict};
use stefan_core::model::{self, InitialData, Order, PhysicalParams, Relaxations, TempProfile};
use stefan_core::solver::{self, ControlMode, FluxSchedule, SolverConfig, Trajectory};
use stefan_core::tol;
use stefan_core::SimState;

/// Fixed warmup excluded from the flux-identity and transform refinement
/// metrics: the reference initial profile is flux-incompatible at t = 0, and
/// the identities under test hold for t > 0.
const WARMUP: f64 = 5.0;

fn zinc() -> PhysicalParams {
    PhysicalParams {
        alpha: 4.532e-5,
        beta: 1.577e-7,
        k_cond: 116.0,
        t_melt: 420.0,
        length: 0.5,
        relaxations: Relaxations::Second { eps: 20.0 },
    }
}

fn reference_data() -> InitialData {
    InitialData {
        s0: 0.1,
        v0: 0.0,
        a0: None,
        profile: TempProfile::Linear { t0_bar: 10.0 },
    }
}

fn reference_gains() -> ControlGains {
    ControlGains::second(0.1, 0.2, 0.2)
}

fn run_closed(
    data: &InitialData,
    params: &PhysicalParams,
    gains: &ControlGains,
    nx: usize,
    dt: f64,
    t_final: f64,
    snapshots: bool,
) -> Trajectory {
    let mut cfg = SolverConfig::new(nx, dt, t_final);
    if snapshots {
        cfg.snapshot_every = 1;
    }
    let order = params.relaxations.order();
    solver::simulate(data, params, Some(gains), &cfg, order, &ControlMode::ClosedLoop)
        .expect("simulation must start")
}

fn state_of(r: &solver::Record) -> Option<SimState> {
    let temp = r.temp.as_ref()?;
    let n = temp.len() - 1;
    Some(SimState {
        t: r.t,
        xi: (0..=n).map(|i| i as f64 / n as f64).collect(),
        temp: temp.clone(),
        s: r.s,
        s_dot: r.s_dot,
        s_ddot: r.s_ddot,
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    (v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

/// Counts local maxima of a moving-average smoothing of `series` whose
/// prominence exceeds 1e-3 of the smoothed range.
fn prominent_peaks(series: &[f64]) -> (usize, usize) {
    let n = series.len();
    let window = (n / 500).max(3);
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(window / 2);
            let hi = (i + window / 2 + 1).min(n);
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let max = smoothed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let prominence = 1e-3 * (max - min);
    let mut peaks = 0;
    let mut first_peak = 0;
    for i in 1..n - 1 {
        if smoothed[i] > smoothed[i - 1] && smoothed[i] >= smoothed[i + 1] {
            let left = smoothed[..i].iter().cloned().fold(f64::INFINITY, f64::min);
            let right = smoothed[i + 1..].iter().cloned().fold(f64::INFINITY, f64::min);
            if smoothed[i] - left.max(right) > prominence {
                if peaks == 0 {
                    first_peak = i;
                }
                peaks += 1;
            }
        }
    }
    (peaks, first_peak)
}

struct Criterion {
    name: &'static str,
    ok: bool,
    detail: String,
}

fn max_wx0_after_warmup(traj: &Trajectory, gains: &ControlGains, params: &PhysicalParams) -> f64 {
    let mut max = 0.0f64;
    for r in traj.records.iter().filter(|r| r.t >= WARMUP) {
        if let Some(st) = state_of(r) {
            let tr = analysis::backstepping_transform(&st, gains, params, Default::default())
                .expect("transform");
            max = max.max(tr.w_x[0].abs());
        }
    }
    max
}

#[test]
fn acceptance() {
    let mut results: Vec<Criterion> = Vec::new();
    let p = zinc();
    let data = reference_data();
    let gains = reference_gains();

    // Shared reference run: nx = 128, dt = 0.25, snapshots at every record.
    let started = std::time::Instant::now();
    let base = run_closed(&data, &p, &gains, 128, 0.25, 3600.0, true);
    let base_runtime = started.elapsed().as_secs_f64();

    // ---- 1: reference closed-loop reproduction ----
    {
        let mut ok = base.completed();
        let mut notes = Vec::new();

        let max_decrease = base
            .records
            .windows(2)
            .map(|w| w[0].s - w[1].s)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_decrease > tol::TOL_MONO * base.dt {
            ok = false;
            notes.push(format!("s decreased by {max_decrease:.2e}"));
        }

        let final_err = (base.last().s - 0.2).abs();
        if final_err > 0.002 {
            ok = false;
            notes.push(format!("|s - s_r| = {final_err:.2e}"));
        }

        let qc_scale = base.records.iter().map(|r| r.qc.abs()).fold(0.0, f64::max);
        let qc_min = base.records.iter().map(|r| r.qc).fold(f64::INFINITY, f64::min);
        if qc_min < -tol::TOL_QC_REL * qc_scale {
            ok = false;
            notes.push(format!("qc_min = {qc_min:.2e}"));
        }

        let t_min = base.records.iter().map(|r| r.min_temp).fold(f64::INFINITY, f64::min);
        if t_min < p.t_melt - tol::TOL_TEMP {
            ok = false;
            notes.push(format!("min T - T_m = {:.2e}", t_min - p.t_melt));
        }

        let tb: Vec<f64> = base.records.iter().map(|r| r.t_boundary).collect();
        let (peaks, peak_idx) = prominent_peaks(&tb);
        let interior = peak_idx > 0 && peak_idx < tb.len() - 1;
        if peaks != 1 || !interior {
            ok = false;
            notes.push(format!("boundary-temperature peaks = {peaks} at idx {peak_idx}"));
        }

        if base_runtime > 60.0 {
            ok = false;
            notes.push(format!("runtime {base_runtime:.1} s"));
        }

        results.push(Criterion {
            name: "1 reference reproduction",
            ok,
            detail: if notes.is_empty() {
                format!(
                    "|s-s_r| = {final_err:.2e}, qc_min = {qc_min:.2e}, runtime = {base_runtime:.2} s"
                )
            } else {
                notes.join("; ")
            },
        });
    }

    // ---- 2: energy-balance convergence order ----
    {
        let mut rms_values = Vec::new();
        for (nx, dt) in [(32usize, 1.0), (64, 0.5), (128, 0.25)] {
            let t = run_closed(&data, &p, &gains, nx, dt, 400.0, true);
            let res = solver::energy_residuals(&t, &p);
            rms_values.push(rms(res.iter().map(|(_, r)| *r)));
        }
        let order = (rms_values[0] / rms_values[2]).log2() / 2.0;
        results.push(Criterion {
            name: "2 energy-balance order",
            ok: order >= 1.6,
            detail: format!(
                "rms = [{:.3e}, {:.3e}, {:.3e}], observed order = {order:.2}",
                rms_values[0], rms_values[1], rms_values[2]
            ),
        });
    }

    // ---- 3: flux-ODE residual refinement ----
    {
        let fine = run_closed(&data, &p, &gains, 256, 0.125, 3600.0, false);
        let r_base = controller::flux_ode_residual(&base, &gains, &p).unwrap();
        let r_fine = controller::flux_ode_residual(&fine, &gains, &p).unwrap();
        let rms_base = rms(
            r_base
                .samples
                .iter()
                .filter(|(t, _)| *t >= WARMUP)
                .map(|(_, v)| *v),
        );
        let rms_fine = rms(
            r_fine
                .samples
                .iter()
                .filter(|(t, _)| *t >= WARMUP)
                .map(|(_, v)| *v),
        );
        let ratio = rms_base / rms_fine;
        results.push(Criterion {
            name: "3 flux-ODE residual",
            ok: ratio >= 3.0,
            detail: format!(
                "rms {rms_base:.3e} -> {rms_fine:.3e} under halving, ratio = {ratio:.2} (t >= {WARMUP} s)"
            ),
        });
    }

    // ---- 4: transform / target-system check ----
    {
        let mut max_ws = 0.0f64;
        let mut max_u = 0.0f64;
        for r in &base.records {
            if let Some(st) = state_of(r) {
                let tr =
                    analysis::backstepping_transform(&st, &gains, &p, Default::default()).unwrap();
                max_ws = max_ws.max(tr.w[st.nx()].abs());
                max_u = max_u.max(
                    st.temp
                        .iter()
                        .map(|t| (t - p.t_melt).abs())
                        .fold(0.0, f64::max),
                );
            }
        }
        let boundary_ok = max_ws <= tol::TOL_TARGET_REL * max_u;

        let mut maxes = Vec::new();
        for (nx, dt) in [(32usize, 1.0), (64, 0.5), (128, 0.25)] {
            let t = run_closed(&data, &p, &gains, nx, dt, 400.0, true);
            maxes.push(max_wx0_after_warmup(&t, &gains, &p));
        }
        let order = (maxes[0] / maxes[2]).log2() / 2.0;
        results.push(Criterion {
            name: "4 transform consistency",
            ok: boundary_ok && order >= 1.6,
            detail: format!(
                "max|w(s)| = {max_ws:.1e} (limit {:.1e}), max|w_x(0)| = [{:.2e}, {:.2e}, {:.2e}], order = {order:.2}",
                tol::TOL_TARGET_REL * max_u,
                maxes[0],
                maxes[1],
                maxes[2]
            ),
        });
    }

    // ---- 5: certificate suite over randomized admissible tuples ----
    {
        let mut seed: u64 = 0x5eed_cafe;
        let mut next = move || {
            // xorshift64*
            seed ^= seed >> 12;
            seed ^= seed << 25;
            seed ^= seed >> 27;
            (seed.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut worst_residual = 0.0f64;
        let mut counterexamples = 0usize;
        let mut tried = 0usize;
        let mut accepted = 0usize;
        while accepted < 50 && tried < 5000 {
            tried += 1;
            let eps = 1.0 + 49.0 * next();
            let alpha = zinc().alpha * (0.5 + 1.5 * next());
            let c1 = 0.05 + 0.95 * next();
            let s_r = 0.15 + 0.25 * next();
            let s0 = s_r * (0.3 + 0.4 * next());
            let t0_bar = 20.0 * next();
            let v0 = 0.001 * next();
            let params = PhysicalParams {
                alpha,
                relaxations: Relaxations::Second { eps },
                ..zinc()
            };
            let d = InitialData {
                s0,
                v0,
                a0: None,
                profile: TempProfile::Linear { t0_bar },
            };
            if !model::validate_initial(&d, &params, Order::Second)
                .map(|v| v.is_ok())
                .unwrap_or(false)
            {
                continue;
            }
            let s_r_min = model::min_setpoint_second(&d, &params).unwrap();
            if s_r <= s_r_min * (1.0 + 1e-6) {
                continue;
            }
            // Place c2 inside the stability bound, which is equivalent to
            // the closed positivity test.
            let probe = ControlGains::second(c1, c1, s_r);
            let check = controller::check_gains_second(&probe, &d, &params).unwrap();
            let upper = check.stability.as_ref().unwrap().c2_upper;
            let span = if upper.is_finite() {
                (upper - c1).min(10.0 * c1)
            } else {
                10.0 * c1
            };
            let c2 = c1 + span * (0.05 + 0.85 * next());
            let g = ControlGains::second(c1, c2, s_r);
            accepted += 1;

            let kappa2 = 10f64.powf(next());
            let sol = analysis::solve_p(&g, &params, 1.0, kappa2).unwrap();
            worst_residual = worst_residual.max(sol.residual_max_eig);

            let rep = analysis::lambda_certificate(&g, &params, 1.0).unwrap();
            if rep.closed_test == Some(Strict::Satisfied) && !rep.cert.lambda_pd_ok {
                counterexamples += 1;
            }
        }
        results.push(Criterion {
            name: "5 certificate suite",
            ok: accepted == 50 && worst_residual <= 1e-10 && counterexamples == 0,
            detail: format!(
                "{accepted} tuples, worst P-residual eig = {worst_residual:.2e}, counterexamples = {counterexamples}"
            ),
        });
    }

    // ---- 6: Lyapunov decay with stability-passing gains ----
    {
        // The reference gain pair may not satisfy the stability condition;
        // equal gains do (the bound exceeds c1 whenever the setpoint is
        // admissible), so the decay run is constructed with c1 = c2.
        let g6 = ControlGains::second(0.1, 0.1, 0.2);
        let check = controller::check_gains_second(&g6, &data, &p).unwrap();
        let passes = check.stability.as_ref().map(|s| s.ok).unwrap_or(false);
        let traj = run_closed(&data, &p, &g6, 128, 0.25, 3600.0, false);
        let phis: Vec<(f64, f64)> = traj
            .records
            .iter()
            .filter_map(|r| r.phi.map(|phi| (r.t, phi)))
            .collect();
        let mut max_growth = f64::NEG_INFINITY;
        for w in phis.windows(2).skip(1) {
            if w[0].1 > 0.0 {
                max_growth = max_growth.max(w[1].1 / w[0].1 - 1.0);
            }
        }
        let fit = analysis::log_linear_fit(&phis);
        let rate = fit.map(|f| f.0).unwrap_or(f64::NAN);
        results.push(Criterion {
            name: "6 Lyapunov decay",
            ok: passes && traj.completed() && max_growth <= tol::TOL_LYAP && rate < 0.0,
            detail: format!(
                "stability condition holds = {passes}, max per-step growth = {max_growth:.2e}, fitted rate = {rate:.3e} 1/s"
            ),
        });
    }

    // ---- 7: safety implication sweep ----
    {
        let mut runs = 0usize;
        let mut failures = Vec::new();
        for c2 in [0.1, 0.15, 0.2] {
            for eps in [10.0, 20.0, 40.0] {
                for t0_bar in [5.0, 10.0, 20.0] {
                    let params = PhysicalParams {
                        relaxations: Relaxations::Second { eps },
                        ..zinc()
                    };
                    let d = InitialData {
                        profile: TempProfile::Linear { t0_bar },
                        ..reference_data()
                    };
                    let g = ControlGains::second(0.1, c2, 0.2);
                    let check = controller::check_gains_second(&g, &d, &params).unwrap();
                    let admissible = check.setpoint_ok
                        && check.safety.as_ref().map(|s| s.ok).unwrap_or(false);
                    let t = run_closed(&d, &params, &g, 64, 0.5, 2000.0, false);
                    let rep = analysis::safety_monitor(&t, &d, &params, Some(&g));
                    let qc_ok = rep.get(ConstraintKind::QcNonneg).unwrap().satisfied;
                    let implied = rep.get(ConstraintKind::SdotNonneg).unwrap().satisfied
                        && rep.get(ConstraintKind::SBounds).unwrap().satisfied
                        && rep.get(ConstraintKind::TempValid).unwrap().satisfied;
                    runs += 1;
                    if !admissible || !t.completed() || (qc_ok && !implied) {
                        failures.push(format!("(c2={c2}, eps={eps}, T0bar={t0_bar})"));
                    }
                }
            }
        }
        results.push(Criterion {
            name: "7 safety implication",
            ok: failures.is_empty() && runs == 27,
            detail: if failures.is_empty() {
                format!("{runs} admissible runs, qc>=0 implies all safety constraints in every one")
            } else {
                format!("counterexamples: {}", failures.join(", "))
            },
        });
    }

    // ---- 8: third-order run ----
    {
        let p3 = PhysicalParams {
            relaxations: Relaxations::Third {
                eps1: 10.0,
                eps2: 20.0,
            },
            ..zinc()
        };
        let d3 = InitialData {
            a0: Some(0.0),
            ..reference_data()
        };
        let g3 = ControlGains::third(0.1, 0.2, 0.22, 0.2);
        let valid = model::validate_initial(&d3, &p3, Order::Third)
            .map(|v| v.is_ok())
            .unwrap_or(false);
        let check =
            controller::check_gains_third(&g3, &d3, &p3, Default::default()).unwrap();
        let admissible = check.gains12_ok
            && check.setpoint_ok
            && check.c3_window.as_ref().map(|w| w.ok).unwrap_or(false);

        let started3 = std::time::Instant::now();
        let t3 = run_closed(&d3, &p3, &g3, 128, 0.25, 3600.0, false);
        let runtime3 = started3.elapsed().as_secs_f64();
        let rep = analysis::safety_monitor(&t3, &d3, &p3, Some(&g3));
        let h1_ok = rep.get(ConstraintKind::SdotNonneg).unwrap().satisfied;
        let h2_ok = rep.get(ConstraintKind::H2Nonneg).unwrap().satisfied;
        let qc_ok = rep.get(ConstraintKind::QcNonneg).unwrap().satisfied;
        let err = (t3.last().s - 0.2).abs();
        results.push(Criterion {
            name: "8 third-order run",
            ok: valid
                && admissible
                && t3.completed()
                && err <= 0.002
                && h1_ok
                && h2_ok
                && qc_ok
                && runtime3 <= 60.0,
            detail: format!(
                "assumptions hold = {}, |s - s_r| = {err:.2e}, h1/h2/qc nonneg = {h1_ok}/{h2_ok}/{qc_ok}, runtime = {runtime3:.2} s",
                valid && admissible
            ),
        });
    }

    // ---- 9: open-loop analytic oracle ----
    {
        let d = InitialData {
            s0: 0.05,
            v0: 0.02,
            a0: None,
            profile: TempProfile::Linear { t0_bar: 0.0 },
        };
        let cfg = SolverConfig::new(32, 0.5, 200.0);
        let t = solver::simulate(
            &d,
            &p,
            None,
            &cfg,
            Order::Second,
            &ControlMode::OpenLoop(FluxSchedule::constant(0.0)),
        )
        .unwrap();
        let mut worst = 0.0f64;
        for r in &t.records {
            let exact = 0.05 + 20.0 * 0.02 * (1.0 - (-r.t / 20.0).exp());
            worst = worst.max(((r.s - exact) / exact).abs());
        }
        results.push(Criterion {
            name: "9 open-loop analytic oracle",
            ok: t.completed() && worst <= 1e-6,
            detail: format!("max relative deviation from closed form = {worst:.2e}"),
        });
    }

    // ---- report ----
    let mut all_ok = true;
    for c in &results {
        let status = if c.ok { "PASS" } else { "FAIL" };
        println!("criterion {:<28} {status} — {}", c.name, c.detail);
        all_ok &= c.ok;
    }
    assert!(
        all_ok,
        "acceptance criteria failed: {}",
        results
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join(" | ")
    );
}
