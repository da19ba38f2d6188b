//! `stefanctl`: reproducible experiments for the high-order Stefan problem.
//!
//! Exit codes: 0 run completed and all monitored constraints held;
//! 2 configuration error; 3 validation error; 4 numerical failure
//! (blow-up, early termination, or a violated safety constraint).

mod config;
mod output;
mod report;
mod sweep;

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use stefan_core::analysis;
use stefan_core::controller;
use stefan_core::model::{self, Order};
use stefan_core::solver;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct AppError {
    pub code: i32,
    pub kind: &'static str,
    pub detail: String,
}

impl AppError {
    fn config(detail: impl ToString) -> Self {
        AppError {
            code: EXIT_CONFIG,
            kind: "config",
            detail: detail.to_string(),
        }
    }
    fn validation(detail: impl ToString) -> Self {
        AppError {
            code: EXIT_VALIDATION,
            kind: "validation",
            detail: detail.to_string(),
        }
    }
    fn numerical(detail: impl ToString) -> Self {
        AppError {
            code: EXIT_NUMERICAL,
            kind: "numerical",
            detail: detail.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "stefanctl",
    about = "Simulation and boundary control of the one-phase Stefan problem with high-order interface dynamics"
)]
struct Cli {
    /// Output directory (overrides the config's [output].dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress output on stdout
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a configuration; writes <stem>_trajectory.csv and <stem>_report.json
    Run { config: PathBuf },
    /// Evaluate admissibility conditions and certificates without simulating
    Check { config: PathBuf },
    /// Run the cross product of parameter axes, e.g. --axis c2=0.1,0.2 --axis nx=32,64
    Sweep {
        config: PathBuf,
        #[arg(long = "axis")]
        axes: Vec<String>,
        /// Worker threads (default: available parallelism)
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run { config } => cmd_run(config, cli.out.as_deref(), cli.quiet),
        Cmd::Check { config } => cmd_check(config, cli.out.as_deref(), cli.quiet),
        Cmd::Sweep { config, axes, jobs } => {
            sweep::cmd_sweep(config, axes, *jobs, cli.out.as_deref(), cli.quiet)
        }
    };
    if let Err(e) = result {
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.kind, "detail": e.detail })
        );
        std::process::exit(e.code);
    }
}

fn out_dir(cfg: &config::ResolvedConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}

/// Validation gate shared by run and sweep: initial-data assumptions plus
/// the setpoint restriction. Gain conditions warn but never gate.
fn validate_gate(resolved: &config::ResolvedConfig) -> Result<SetpointInfo, AppError> {
    let verdict = model::validate_initial(&resolved.data, &resolved.params, resolved.order)
        .map_err(|e| AppError::validation(e.to_string()))?;
    if !verdict.is_ok() {
        let msgs: Vec<String> = verdict
            .violations()
            .iter()
            .map(|v| format!("{:?}: {}", v.assumption, v.message))
            .collect();
        return Err(AppError::validation(format!(
            "initial data inadmissible: {}",
            msgs.join("; ")
        )));
    }

    let mut info = SetpointInfo {
        validation: verdict,
        s_r_min: None,
    };
    // The setpoint restriction gates closed-loop runs only; open-loop runs
    // carry gains solely so the monitor can check the interface bounds.
    if !matches!(resolved.mode, stefan_core::ControlMode::ClosedLoop) {
        return Ok(info);
    }
    if let Some(gains) = &resolved.gains {
        let s_r_min = match resolved.order {
            Order::Second => Some(
                model::min_setpoint_second(&resolved.data, &resolved.params)
                    .map_err(|e| AppError::validation(e.to_string()))?,
            ),
            Order::Third => model::min_setpoint_third(
                &resolved.data,
                &resolved.params,
                gains.c1,
                gains.c2,
                resolved.setpoint_eps,
            )
            .ok(),
        };
        if let Some(min) = s_r_min {
            if gains.s_r <= min {
                return Err(AppError::validation(format!(
                    "setpoint restriction violated: s_r = {} must exceed the minimum admissible setpoint {min}",
                    gains.s_r
                )));
            }
        }
        info.s_r_min = s_r_min;
    }
    Ok(info)
}

struct SetpointInfo {
    validation: model::Validation,
    s_r_min: Option<f64>,
}

/// Gain-condition reports; warnings only.
fn gain_reports(
    resolved: &config::ResolvedConfig,
) -> (
    Option<controller::GainCheckSecond>,
    Option<controller::GainCheckThird>,
    Vec<String>,
) {
    let mut warnings = Vec::new();
    let Some(gains) = &resolved.gains else {
        return (None, None, warnings);
    };
    match resolved.order {
        Order::Second => {
            match controller::check_gains_second(gains, &resolved.data, &resolved.params) {
                Ok(rep) => {
                    if let Some(s) = &rep.safety {
                        if !s.ok {
                            warnings.push(format!(
                                "safety gain condition violated: need c1 <= c2 < {}",
                                s.c2_upper
                            ));
                        }
                    }
                    if let Some(st) = &rep.stability {
                        if !st.ok {
                            warnings.push(format!(
                                "stability gain condition violated: need c2 < {} ({:?} branch)",
                                st.c2_upper, st.branch
                            ));
                        }
                    }
                    (Some(rep), None, warnings)
                }
                Err(e) => {
                    warnings.push(format!("gain check unavailable: {e}"));
                    (None, None, warnings)
                }
            }
        }
        Order::Third => {
            match controller::check_gains_third(
                gains,
                &resolved.data,
                &resolved.params,
                resolved.setpoint_eps,
            ) {
                Ok(rep) => {
                    if !rep.gains12_ok {
                        warnings.push("gain condition violated: need 0 < c1 <= c2".to_string());
                    }
                    if let Some(w) = &rep.c3_window {
                        if !w.ok {
                            warnings.push(format!(
                                "c3 window violated: need c2 <= c3 <= {}",
                                w.upper
                            ));
                        }
                    }
                    (None, Some(rep), warnings)
                }
                Err(e) => {
                    warnings.push(format!("gain check unavailable: {e}"));
                    (None, None, warnings)
                }
            }
        }
    }
}

fn certificate_report(resolved: &config::ResolvedConfig) -> Option<analysis::LambdaReport> {
    let gains = resolved.gains.as_ref()?;
    analysis::lambda_certificate(gains, &resolved.params, 1.0).ok()
}

fn cmd_run(cfg_path: &Path, out_flag: Option<&Path>, quiet: bool) -> Result<(), AppError> {
    let started = std::time::Instant::now();
    let raw = config::RunConfig::load(cfg_path).map_err(|e| AppError::config(format!("{e:#}")))?;
    let resolved = raw.resolve().map_err(|e| AppError::config(format!("{e:#}")))?;
    let info = validate_gate(&resolved)?;

    let (check2, check3, warnings) = gain_reports(&resolved);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let cert = certificate_report(&resolved);

    let traj = solver::simulate(
        &resolved.data,
        &resolved.params,
        resolved.gains.as_ref(),
        &resolved.solver,
        resolved.order,
        &resolved.mode,
    )
    .map_err(|e| AppError::numerical(e.to_string()))?;

    let safety = analysis::safety_monitor(
        &traj,
        &resolved.data,
        &resolved.params,
        resolved.gains.as_ref(),
    );
    let phis: Vec<(f64, f64)> = traj
        .records
        .iter()
        .filter_map(|r| r.phi.map(|p| (r.t, p)))
        .collect();
    let phi_fit_rate = analysis::log_linear_fit(&phis).map(|(rate, _)| rate);

    let dir = out_dir(&resolved, out_flag);
    std::fs::create_dir_all(&dir).map_err(|e| AppError::config(e.to_string()))?;
    let stem = stem(cfg_path);
    let csv_path = dir.join(format!("{stem}_trajectory.csv"));
    std::fs::write(&csv_path, output::trajectory_csv(&traj))
        .map_err(|e| AppError::config(e.to_string()))?;

    let report = report::Report {
        schema_version: report::REPORT_SCHEMA_VERSION,
        order: match resolved.order {
            Order::Second => 2,
            Order::Third => 3,
        },
        validation: report::ValidationSummary::from_core(&info.validation),
        setpoint: resolved.gains.as_ref().map(|g| report::SetpointSummary {
            s_r: g.s_r,
            s_r_min: info.s_r_min.unwrap_or(f64::NAN),
            admissible: info.s_r_min.map(|m| g.s_r > m).unwrap_or(false),
            epsilon_choice: (resolved.order == Order::Third).then_some(resolved.setpoint_eps),
        }),
        gain_check_second: check2,
        gain_check_third: check3,
        certificate: cert.as_ref().map(report::CertificateSummary::from_core),
        safety: Some(safety.clone()),
        phi_fit_rate,
        termination: Some(report::TerminationSummary::from_core(&traj.termination)),
        final_setpoint_error: resolved.gains.as_ref().map(|g| (traj.last().s - g.s_r).abs()),
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let json_path = dir.join(format!("{stem}_report.json"));
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report).map_err(|e| AppError::config(e.to_string()))?,
    )
    .map_err(|e| AppError::config(e.to_string()))?;

    if !quiet {
        println!(
            "run {}: {} records, s(end) = {}, wrote {} and {}",
            stem,
            traj.records.len(),
            traj.last().s,
            csv_path.display(),
            json_path.display()
        );
    }

    if !traj.completed() {
        if let solver::Termination::Early { reason, t } = &traj.termination {
            return Err(AppError::numerical(format!(
                "run terminated early at t = {t}: {reason}"
            )));
        }
    }
    if !safety.all_satisfied {
        let broken: Vec<String> = safety
            .constraints
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| format!("{:?}", c.name))
            .collect();
        return Err(AppError::numerical(format!(
            "monitored constraints violated: {}",
            broken.join(", ")
        )));
    }
    Ok(())
}

fn cmd_check(cfg_path: &Path, out_flag: Option<&Path>, quiet: bool) -> Result<(), AppError> {
    let started = std::time::Instant::now();
    let raw = config::RunConfig::load(cfg_path).map_err(|e| AppError::config(format!("{e:#}")))?;
    let resolved = raw.resolve().map_err(|e| AppError::config(format!("{e:#}")))?;

    let validation = model::validate_initial(&resolved.data, &resolved.params, resolved.order)
        .map_err(|e| AppError::validation(e.to_string()))?;

    let s_r_min = resolved.gains.as_ref().and_then(|g| match resolved.order {
        Order::Second => model::min_setpoint_second(&resolved.data, &resolved.params).ok(),
        Order::Third => model::min_setpoint_third(
            &resolved.data,
            &resolved.params,
            g.c1,
            g.c2,
            resolved.setpoint_eps,
        )
        .ok(),
    });
    let (check2, check3, warnings) = gain_reports(&resolved);
    let cert = certificate_report(&resolved);

    if !quiet {
        println!("validation: {}", if validation.is_ok() { "ok" } else { "violated" });
        for v in validation.violations() {
            println!("  {:?}: {}", v.assumption, v.message);
        }
        if let (Some(g), Some(min)) = (&resolved.gains, s_r_min) {
            println!(
                "setpoint: s_r = {} vs minimum {min} -> {}",
                g.s_r,
                if g.s_r > min { "admissible" } else { "inadmissible" }
            );
        }
        if let Some(rep) = &check2 {
            if let Some(s) = &rep.safety {
                println!("safety gain condition: {} (c2 < {})", s.ok, s.c2_upper);
            }
            if let Some(st) = &rep.stability {
                println!(
                    "stability gain condition: {} ({:?} branch, c2 < {})",
                    st.ok, st.branch, st.c2_upper
                );
            }
        }
        if let Some(rep) = &check3 {
            println!("gains 0 < c1 <= c2: {}", rep.gains12_ok);
            if let Some(w) = &rep.c3_window {
                println!("c3 window: {} (c2 <= c3 <= {})", w.ok, w.upper);
            }
        }
        if let Some(c) = &cert {
            println!(
                "certificate: P residual max eig = {:.3e}, Lambda min eig = {:.3e} (pd = {})",
                c.cert.p_residual_max_eig, c.cert.lambda_min_eig, c.cert.lambda_pd_ok
            );
        }
        for w in &warnings {
            println!("warning: {w}");
        }
    }

    let report = report::Report {
        schema_version: report::REPORT_SCHEMA_VERSION,
        order: match resolved.order {
            Order::Second => 2,
            Order::Third => 3,
        },
        validation: report::ValidationSummary::from_core(&validation),
        setpoint: resolved.gains.as_ref().map(|g| report::SetpointSummary {
            s_r: g.s_r,
            s_r_min: s_r_min.unwrap_or(f64::NAN),
            admissible: s_r_min.map(|m| g.s_r > m).unwrap_or(false),
            epsilon_choice: (resolved.order == Order::Third).then_some(resolved.setpoint_eps),
        }),
        gain_check_second: check2,
        gain_check_third: check3,
        certificate: cert.as_ref().map(report::CertificateSummary::from_core),
        safety: None,
        phi_fit_rate: None,
        termination: None,
        final_setpoint_error: None,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let dir = out_dir(&resolved, out_flag);
    std::fs::create_dir_all(&dir).map_err(|e| AppError::config(e.to_string()))?;
    let json_path = dir.join(format!("{}_check.json", stem(cfg_path)));
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report).map_err(|e| AppError::config(e.to_string()))?,
    )
    .map_err(|e| AppError::config(e.to_string()))?;
    if !quiet {
        println!("wrote {}", json_path.display());
    }
    Ok(())
}
