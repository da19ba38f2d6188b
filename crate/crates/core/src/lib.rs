//! Simulation and control of the one-phase Stefan problem whose liquid-solid
//! interface obeys second- or third-order dynamics: finite-difference
//! simulation on an immobilized domain, backstepping boundary heat-flux
//! control, runtime safety monitoring, and Lyapunov stability certificates.

pub mod analysis;
pub mod controller;
pub mod error;
pub mod model;
pub mod quad;
pub mod solver;
pub mod tol;

pub use controller::ControlGains;
pub use error::{AnalysisError, ModelError, SolverError};
pub use model::{
    InitialData, Order, PhysicalParams, Relaxations, SetpointEps, SimState, TempProfile,
};
pub use solver::{ControlMode, FluxSchedule, Scheme, SolverConfig, Trajectory};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::model::{PhysicalParams, Relaxations};

    /// Zinc constants (thermal diffusivity, interface response, conductivity)
    /// as used by the bundled configurations.
    pub fn zinc_second() -> PhysicalParams {
        PhysicalParams {
            alpha: 4.532e-5,
            beta: 1.577e-7,
            k_cond: 116.0,
            t_melt: 420.0,
            length: 0.5,
            relaxations: Relaxations::Second { eps: 20.0 },
        }
    }

    pub fn zinc_third() -> PhysicalParams {
        PhysicalParams {
            relaxations: Relaxations::Third {
                eps1: 10.0,
                eps2: 20.0,
            },
            ..zinc_second()
        }
    }
}
