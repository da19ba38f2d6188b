//! Trajectory CSV rendering. Floats are written with 17 significant digits
//! so the files round-trip losslessly and identical runs diff byte-equal.

use std::fmt::Write as _;
use stefan_core::model::Order;
use stefan_core::solver::Trajectory;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Renders the trajectory with the fixed header
/// `t,s,s_dot[,s_ddot],qc,T_boundary,V,Phi` plus the safety-flag columns
/// (flag_s_bounds only for closed-loop runs, flag_h2_nonneg only for third
/// order). Missing optional values render as empty cells.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let third = traj.order == Order::Third;
    let with_sbounds = traj.s_r.is_some();

    let mut header: Vec<&str> = vec!["t", "s", "s_dot"];
    if third {
        header.push("s_ddot");
    }
    header.extend(["qc", "T_boundary", "V", "Phi"]);
    header.extend([
        "flag_temp_valid",
        "flag_interface_valid",
        "flag_qc_nonneg",
        "flag_sdot_nonneg",
    ]);
    if with_sbounds {
        header.push("flag_s_bounds");
    }
    if third {
        header.push("flag_h2_nonneg");
    }

    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in &traj.records {
        let mut cols: Vec<String> = vec![fmt_f64(r.t), fmt_f64(r.s), fmt_f64(r.s_dot)];
        if third {
            cols.push(fmt_opt(r.s_ddot));
        }
        cols.push(fmt_f64(r.qc));
        cols.push(fmt_f64(r.t_boundary));
        cols.push(fmt_opt(r.v_lyap));
        cols.push(fmt_opt(r.phi));
        cols.push(fmt_flag(r.flags.temp_valid).to_string());
        cols.push(fmt_flag(r.flags.interface_valid).to_string());
        cols.push(fmt_flag(r.flags.qc_nonneg).to_string());
        cols.push(fmt_flag(r.flags.sdot_nonneg).to_string());
        if with_sbounds {
            cols.push(fmt_flag(r.flags.s_bounds.unwrap_or(true)).to_string());
        }
        if third {
            cols.push(fmt_flag(r.flags.h2_nonneg.unwrap_or(true)).to_string());
        }
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}
