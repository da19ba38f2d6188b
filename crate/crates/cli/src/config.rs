//! Run configuration: a TOML document with an explicit `schema_version`.
//! Unknown keys are errors (the schema fails closed), and a rendered config
//! parses back to an identical value.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use stefan_core::model::{InitialData, PhysicalParams, Relaxations, SetpointEps, TempProfile};
use stefan_core::solver::{ControlMode, FluxSchedule, FluxStencil, Scheme, SolverConfig};
use stefan_core::ControlGains;

pub const SCHEMA_VERSION: u32 = 1;

/// Unit system of the configuration file. Internally everything is SI; a
/// `cm` config is converted once at the boundary:
/// lengths and velocities x1e-2, diffusivities x1e-4, conductivity x1e2,
/// flux x1e4. Temperatures, times, and gains are unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    #[default]
    Si,
    Cm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub order: u8,
    #[serde(default)]
    pub units: Units,
    pub physical: PhysicalSection,
    pub initial: InitialSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsSection>,
    pub solver: SolverSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub alpha: f64,
    pub beta: f64,
    pub k_cond: f64,
    pub t_melt: f64,
    pub length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub s0: f64,
    pub v0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    pub profile: ProfileSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum ProfileSection {
    Linear { t0_bar: f64 },
    Table { x: Vec<f64>, temp: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSection {
    pub c1: f64,
    pub c2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
    pub s_r: f64,
    /// Which relaxation time enters the third-order setpoint bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setpoint_epsilon: Option<SetpointEps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub nx: usize,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// 2 or 3.
    #[serde(default = "default_flux_stencil")]
    pub flux_stencil: u8,
    /// Snapshot decimation override; defaults to one snapshot per 0.1 s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

fn default_flux_stencil() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ControlSection {
    pub mode: ModeKind,
    /// Open-loop schedule as `[t, qc]` pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<[f64; 2]>>,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            mode: ModeKind::ClosedLoop,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    ClosedLoop,
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Everything a run needs, in SI units.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub order: stefan_core::Order,
    pub params: PhysicalParams,
    pub data: InitialData,
    pub gains: Option<ControlGains>,
    pub setpoint_eps: SetpointEps,
    pub solver: SolverConfig,
    pub mode: ControlMode,
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing configuration")?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {})",
                cfg.schema_version,
                SCHEMA_VERSION
            );
        }
        Ok(cfg)
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string_pretty(self).context("rendering configuration")
    }

    /// Converts to SI core types, applying the `cm` scalings when requested.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let (len, diff, cond, flux) = match self.units {
            Units::Si => (1.0, 1.0, 1.0, 1.0),
            Units::Cm => (1e-2, 1e-4, 1e2, 1e4),
        };

        let order = match self.order {
            2 => stefan_core::Order::Second,
            3 => stefan_core::Order::Third,
            o => bail!("order must be 2 or 3, got {o}"),
        };

        let relaxations = match (order, self.physical.eps, self.physical.eps1, self.physical.eps2)
        {
            (stefan_core::Order::Second, Some(eps), None, None) => Relaxations::Second { eps },
            (stefan_core::Order::Third, None, Some(eps1), Some(eps2)) => {
                Relaxations::Third { eps1, eps2 }
            }
            (stefan_core::Order::Second, ..) => {
                bail!("order 2 requires exactly [physical].eps")
            }
            (stefan_core::Order::Third, ..) => {
                bail!("order 3 requires exactly [physical].eps1 and [physical].eps2")
            }
        };

        let params = PhysicalParams {
            alpha: self.physical.alpha * diff,
            beta: self.physical.beta * diff,
            k_cond: self.physical.k_cond * cond,
            t_melt: self.physical.t_melt,
            length: self.physical.length * len,
            relaxations,
        };

        let profile = match &self.initial.profile {
            ProfileSection::Linear { t0_bar } => TempProfile::Linear { t0_bar: *t0_bar },
            ProfileSection::Table { x, temp } => TempProfile::Table {
                x: x.iter().map(|v| v * len).collect(),
                temp: temp.clone(),
            },
        };
        let data = InitialData {
            s0: self.initial.s0 * len,
            v0: self.initial.v0 * len,
            a0: self.initial.a0.map(|a| a * len),
            profile,
        };

        let gains = match &self.gains {
            None => None,
            Some(g) => {
                let s_r = g.s_r * len;
                Some(match order {
                    stefan_core::Order::Second => {
                        if g.c3.is_some() {
                            bail!("c3 given for an order-2 run");
                        }
                        ControlGains::second(g.c1, g.c2, s_r)
                    }
                    stefan_core::Order::Third => {
                        let c3 = g.c3.context("order 3 requires [gains].c3")?;
                        ControlGains::third(g.c1, g.c2, c3, s_r)
                    }
                })
            }
        };
        let setpoint_eps = self
            .gains
            .as_ref()
            .and_then(|g| g.setpoint_epsilon)
            .unwrap_or_default();

        if self.solver.nx < 16 {
            bail!("[solver].nx must be at least 16, got {}", self.solver.nx);
        }
        let flux_stencil = match self.solver.flux_stencil {
            2 => FluxStencil::Second,
            3 => FluxStencil::Third,
            o => bail!("[solver].flux_stencil must be 2 or 3, got {o}"),
        };
        let mut solver = SolverConfig::new(self.solver.nx, self.solver.dt, self.solver.t_final);
        solver.scheme = self.solver.scheme;
        solver.flux_stencil = flux_stencil;
        if let Some(every) = self.solver.snapshot_every {
            if every == 0 {
                bail!("[solver].snapshot_every must be positive");
            }
            solver.snapshot_every = every;
        }

        let mode = match self.control.mode {
            ModeKind::ClosedLoop => {
                if gains.is_none() {
                    bail!("closed-loop mode requires a [gains] section");
                }
                if self.control.schedule.is_some() {
                    bail!("closed-loop mode does not take a schedule");
                }
                ControlMode::ClosedLoop
            }
            ModeKind::OpenLoop => {
                let sched = self
                    .control
                    .schedule
                    .as_ref()
                    .context("open-loop mode requires [control].schedule")?;
                if sched.is_empty() {
                    bail!("[control].schedule must not be empty");
                }
                let mut points: Vec<(f64, f64)> =
                    sched.iter().map(|p| (p[0], p[1] * flux)).collect();
                if !points.windows(2).all(|w| w[0].0 < w[1].0) {
                    bail!("[control].schedule times must be strictly increasing");
                }
                points.shrink_to_fit();
                ControlMode::OpenLoop(FluxSchedule { points })
            }
        };

        Ok(ResolvedConfig {
            order,
            params,
            data,
            gains,
            setpoint_eps,
            solver,
            mode,
            out_dir: self.output.dir.clone(),
        })
    }
}
