//! Shared fixtures for the benchmark targets.

use stefan_core::model::{InitialData, PhysicalParams, Relaxations, TempProfile};
use stefan_core::ControlGains;

pub fn zinc() -> PhysicalParams {
    PhysicalParams {
        alpha: 4.532e-5,
        beta: 1.577e-7,
        k_cond: 116.0,
        t_melt: 420.0,
        length: 0.5,
        relaxations: Relaxations::Second { eps: 20.0 },
    }
}

pub fn reference_data() -> InitialData {
    InitialData {
        s0: 0.1,
        v0: 0.0,
        a0: None,
        profile: TempProfile::Linear { t0_bar: 10.0 },
    }
}

pub fn reference_gains() -> ControlGains {
    ControlGains::second(0.1, 0.2, 0.2)
}
