//! Parameter sweeps: the cross product of explicit value axes, executed by a
//! bounded worker pool, with one summary row per run in a deterministic
//! order (axes sorted by name, values in the order given).

use crate::{config, output, AppError};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use stefan_core::analysis::{self, ConstraintKind};
use stefan_core::solver;

const AXIS_KEYS: &[&str] = &[
    "a0", "c1", "c2", "c3", "dt", "eps", "eps1", "eps2", "nx", "s0", "s_r", "t0_bar", "t_final",
    "v0",
];

#[derive(Debug, Clone)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

pub fn parse_axes(specs: &[String]) -> Result<Vec<Axis>, AppError> {
    if specs.is_empty() {
        return Err(AppError::config("sweep needs at least one --axis key=v1,v2,..."));
    }
    let mut axes = Vec::new();
    for spec in specs {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| AppError::config(format!("malformed axis '{spec}'")))?;
        let key = key.trim();
        if !AXIS_KEYS.contains(&key) {
            return Err(AppError::config(format!(
                "unknown axis '{key}' (known: {})",
                AXIS_KEYS.join(", ")
            )));
        }
        if axes.iter().any(|a: &Axis| a.key == key) {
            return Err(AppError::config(format!("duplicate axis '{key}'")));
        }
        let values: Result<Vec<f64>, _> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect();
        let values = values.map_err(|e| AppError::config(format!("axis '{key}': {e}")))?;
        if values.is_empty() {
            return Err(AppError::config(format!("axis '{key}' has no values")));
        }
        axes.push(Axis {
            key: key.to_string(),
            values,
        });
    }
    axes.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(axes)
}

/// Applies one axis value to the raw (pre-unit-conversion) configuration.
fn apply(raw: &mut config::RunConfig, key: &str, value: f64) -> Result<(), String> {
    fn gains(raw: &mut config::RunConfig) -> Result<&mut config::GainsSection, String> {
        raw.gains
            .as_mut()
            .ok_or_else(|| "axis requires a [gains] section".to_string())
    }
    match key {
        "c1" => gains(raw)?.c1 = value,
        "c2" => gains(raw)?.c2 = value,
        "c3" => gains(raw)?.c3 = Some(value),
        "s_r" => gains(raw)?.s_r = value,
        "eps" => raw.physical.eps = Some(value),
        "eps1" => raw.physical.eps1 = Some(value),
        "eps2" => raw.physical.eps2 = Some(value),
        "s0" => raw.initial.s0 = value,
        "v0" => raw.initial.v0 = value,
        "a0" => raw.initial.a0 = Some(value),
        "t0_bar" => match &mut raw.initial.profile {
            config::ProfileSection::Linear { t0_bar } => *t0_bar = value,
            config::ProfileSection::Table { .. } => {
                return Err("t0_bar axis requires a linear profile".to_string())
            }
        },
        "nx" => {
            if value <= 0.0 || value.fract() != 0.0 {
                return Err(format!("nx must be a positive integer, got {value}"));
            }
            raw.solver.nx = value as usize;
        }
        "dt" => raw.solver.dt = value,
        "t_final" => raw.solver.t_final = value,
        _ => return Err(format!("unhandled axis {key}")),
    }
    Ok(())
}

struct Row {
    run_id: String,
    values: Vec<f64>,
    status: &'static str,
    safety_all: Option<bool>,
    qc_nonneg: Option<bool>,
    sdot_nonneg: Option<bool>,
    s_bounds: Option<bool>,
    temp_valid: Option<bool>,
    final_abs_err: Option<f64>,
    phi_rate: Option<f64>,
    runtime_s: f64,
}

fn run_one(
    base: &config::RunConfig,
    axes: &[Axis],
    combo: &[usize],
    run_id: &str,
    dir: &Path,
) -> Row {
    let started = std::time::Instant::now();
    let values: Vec<f64> = axes
        .iter()
        .zip(combo)
        .map(|(a, &i)| a.values[i])
        .collect();
    let mut row = Row {
        run_id: run_id.to_string(),
        values: values.clone(),
        status: "ok",
        safety_all: None,
        qc_nonneg: None,
        sdot_nonneg: None,
        s_bounds: None,
        temp_valid: None,
        final_abs_err: None,
        phi_rate: None,
        runtime_s: 0.0,
    };

    let mut raw = base.clone();
    for (axis, &value) in axes.iter().zip(&values) {
        if let Err(e) = apply(&mut raw, &axis.key, value) {
            eprintln!("{run_id}: {e}");
            row.status = "config-error";
            row.runtime_s = started.elapsed().as_secs_f64();
            return row;
        }
    }
    if let Ok(rendered) = raw.render() {
        let _ = std::fs::write(dir.join(format!("{run_id}_config.cfg")), rendered);
    }

    let resolved = match raw.resolve() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{run_id}: {e:#}");
            row.status = "config-error";
            row.runtime_s = started.elapsed().as_secs_f64();
            return row;
        }
    };
    if let Err(e) = crate::validate_gate(&resolved) {
        eprintln!("{run_id}: {}", e.detail);
        row.status = "validation-error";
        row.runtime_s = started.elapsed().as_secs_f64();
        return row;
    }

    let traj = match solver::simulate(
        &resolved.data,
        &resolved.params,
        resolved.gains.as_ref(),
        &resolved.solver,
        resolved.order,
        &resolved.mode,
    ) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{run_id}: {e}");
            row.status = "numerical-failure";
            row.runtime_s = started.elapsed().as_secs_f64();
            return row;
        }
    };

    let safety = analysis::safety_monitor(
        &traj,
        &resolved.data,
        &resolved.params,
        resolved.gains.as_ref(),
    );
    let flag = |kind| safety.get(kind).map(|c| c.satisfied);
    row.safety_all = Some(safety.all_satisfied);
    row.qc_nonneg = flag(ConstraintKind::QcNonneg);
    row.sdot_nonneg = flag(ConstraintKind::SdotNonneg);
    row.s_bounds = flag(ConstraintKind::SBounds);
    row.temp_valid = flag(ConstraintKind::TempValid);
    row.final_abs_err = resolved
        .gains
        .as_ref()
        .map(|g| (traj.last().s - g.s_r).abs());
    let phis: Vec<(f64, f64)> = traj
        .records
        .iter()
        .filter_map(|r| r.phi.map(|p| (r.t, p)))
        .collect();
    row.phi_rate = analysis::log_linear_fit(&phis).map(|(rate, _)| rate);
    if !traj.completed() {
        row.status = "numerical-failure";
    }

    let _ = std::fs::write(
        dir.join(format!("{run_id}_trajectory.csv")),
        output::trajectory_csv(&traj),
    );
    row.runtime_s = started.elapsed().as_secs_f64();
    row
}

fn fmt_opt_bool(b: Option<bool>) -> String {
    b.map(|v| if v { "1" } else { "0" }.to_string())
        .unwrap_or_default()
}

fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(output::fmt_f64).unwrap_or_default()
}

pub fn cmd_sweep(
    cfg_path: &Path,
    axis_specs: &[String],
    jobs: Option<usize>,
    out_flag: Option<&Path>,
    quiet: bool,
) -> Result<(), AppError> {
    let base =
        config::RunConfig::load(cfg_path).map_err(|e| AppError::config(format!("{e:#}")))?;
    // Resolve once so a broken base config is a config error up front.
    let resolved = base.resolve().map_err(|e| AppError::config(format!("{e:#}")))?;
    let axes = parse_axes(axis_specs)?;

    let total: usize = axes.iter().map(|a| a.values.len()).product();
    let width = total.to_string().len().max(4);
    let combos: Vec<Vec<usize>> = (0..total)
        .map(|mut idx| {
            // Row-major over axes sorted by key: first axis outermost.
            let mut combo = vec![0; axes.len()];
            for (slot, axis) in combo.iter_mut().zip(&axes).rev() {
                *slot = idx % axis.values.len();
                idx /= axis.values.len();
            }
            combo
        })
        .collect();

    let dir = crate::out_dir(&resolved, out_flag);
    std::fs::create_dir_all(&dir).map_err(|e| AppError::config(e.to_string()))?;

    let jobs = jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);

    let rows: Mutex<Vec<Option<Row>>> = Mutex::new((0..total).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(total) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let run_id = format!("run_{i:0width$}");
                let row = run_one(&base, &axes, &combos[i], &run_id, &dir);
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });

    let rows = rows.into_inner().unwrap();
    let mut csv = String::new();
    let mut header = vec!["run_id".to_string()];
    header.extend(axes.iter().map(|a| a.key.clone()));
    header.extend(
        [
            "status",
            "safety_all",
            "qc_nonneg",
            "sdot_nonneg",
            "s_bounds",
            "temp_valid",
            "final_abs_err",
            "phi_rate",
            "runtime_s",
        ]
        .map(String::from),
    );
    csv.push_str(&header.join(","));
    csv.push('\n');
    for row in rows.iter().flatten() {
        let mut cols = vec![row.run_id.clone()];
        cols.extend(row.values.iter().map(|v| output::fmt_f64(*v)));
        cols.push(row.status.to_string());
        cols.push(fmt_opt_bool(row.safety_all));
        cols.push(fmt_opt_bool(row.qc_nonneg));
        cols.push(fmt_opt_bool(row.sdot_nonneg));
        cols.push(fmt_opt_bool(row.s_bounds));
        cols.push(fmt_opt_bool(row.temp_valid));
        cols.push(fmt_opt_f64(row.final_abs_err));
        cols.push(fmt_opt_f64(row.phi_rate));
        cols.push(format!("{:.3}", row.runtime_s));
        csv.push_str(&cols.join(","));
        csv.push('\n');
    }
    let summary_path = dir.join("sweep_summary.csv");
    std::fs::write(&summary_path, csv).map_err(|e| AppError::config(e.to_string()))?;
    if !quiet {
        println!("sweep: {total} runs with {jobs} workers, wrote {}", summary_path.display());
    }
    Ok(())
}
