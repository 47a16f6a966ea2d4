//! Run configuration in TOML. Unknown keys are rejected in every section.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuity::PenaltyParams;
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::fields::{Point, StaggeredGrid};
use crate::geometry::{erode, DomainSpec, Shape, Wall};

/// Environment variable that relocates every output directory.
pub const OUTPUT_ROOT_ENV: &str = "RIGIDFLOW_OUTPUT_ROOT";

/// Root for relative output paths: `$RIGIDFLOW_OUTPUT_ROOT`, or the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    /// Extent in x.
    pub lx: f64,
    /// Extent in y.
    pub ly: f64,
    /// Width of the collar used by the boundary extension; defaults to `h / 2`.
    pub collar: Option<f64>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { lx: 1.0, ly: 1.0, collar: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 96, ny: 96 }
    }
}

/// Wall velocity profile on the left and right walls; top and bottom walls
/// are impermeable and no-slip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InflowProfile {
    /// All walls at rest.
    None,
    /// `u_B = (U0, 0)` on the left and right walls.
    Uniform,
    /// Channel profile `6 U0 s (1 - s)`, `s = y / ly`, with mean `U0`.
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub profile: InflowProfile,
    /// Mean wall speed `U0`.
    pub u0: f64,
    /// Boundary density `rho_B`.
    pub rho_b: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self { profile: InflowProfile::Parabolic, u0: 0.2, rho_b: 1.0 }
    }
}

impl BoundaryConfig {
    pub fn velocity(&self, ly: f64) -> impl Fn(Wall, Point) -> [f64; 2] {
        let cfg = *self;
        move |w, p| match (w, cfg.profile) {
            (_, InflowProfile::None) | (Wall::Bottom | Wall::Top, _) => [0.0, 0.0],
            (_, InflowProfile::Uniform) => [cfg.u0, 0.0],
            (_, InflowProfile::Parabolic) => {
                let s = p[1] / ly;
                [6.0 * cfg.u0 * s * (1.0 - s), 0.0]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialVelocity {
    Rest,
    /// The boundary extension `u_inf`.
    Extension,
    /// The left-wall profile continued across the domain.
    Inflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// Uniform initial density.
    pub rho0: f64,
    pub velocity: InitialVelocity,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { rho0: 1.0, velocity: InitialVelocity::Inflow }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    /// Physical solid `S_0`.
    pub shape: Shape,
    /// Solid density.
    #[serde(default = "one")]
    pub rho_s: f64,
    /// Hold the body in place and pin the velocity inside it to zero.
    #[serde(default)]
    pub fixed: bool,
    /// Markers on the boundary of the eroded set.
    #[serde(default = "default_markers")]
    pub boundary_markers: usize,
    /// Interior marker lattice spacing; defaults to `r`.
    #[serde(default)]
    pub lattice: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_markers() -> usize {
    128
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    /// Horizon `T`.
    pub t_end: f64,
    /// Fraction of the acoustic CFL limit used when `dt` is absent.
    pub cfl: f64,
    /// Fixed time step.
    pub dt: Option<f64>,
    /// Hard cap on the number of steps.
    pub max_steps: Option<usize>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { t_end: 0.1, cfl: 0.4, dt: None, max_steps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory, relative to the output root.
    pub dir: PathBuf,
    /// Snapshot every this many steps; 0 writes the initial and final states only.
    pub snapshot_every: usize,
    /// Row-parallel stencil assembly.
    pub parallel: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("output"), snapshot_every: 0, parallel: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Depth inside `O` defining the rigidity region; defaults to `2 dx`.
    pub chi_margin: Option<f64>,
    /// Distance of the stress probe ring from the solid; defaults to `2 dx`.
    pub probe_offset: Option<f64>,
    /// Clearance of the fluid region from the solid; defaults to `2 dx`.
    pub fluid_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub grid: GridConfig,
    pub penalty: PenaltyParams,
    pub boundary: BoundaryConfig,
    pub initial: InitialConfig,
    pub body: Option<BodyConfig>,
    pub time: TimeConfig,
    pub output: OutputConfig,
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    /// The reference scenario: channel inflow past a disc at the center.
    pub fn default_scenario() -> Self {
        Self {
            body: Some(BodyConfig {
                shape: Shape::Disc { center: [0.5, 0.5], radius: 0.15 },
                rho_s: 1.0,
                fixed: false,
                boundary_markers: default_markers(),
                lattice: None,
            }),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            lx: self.domain.lx,
            ly: self.domain.ly,
            h: self.penalty.h,
            collar: self.domain.collar.unwrap_or(0.5 * self.penalty.h),
        }
    }

    pub fn grid(&self) -> Result<StaggeredGrid> {
        StaggeredGrid::new(self.grid.nx, self.grid.ny, self.domain.lx, self.domain.ly)
    }

    pub fn exec(&self) -> Exec {
        if self.output.parallel {
            Exec::Parallel
        } else {
            Exec::Serial
        }
    }

    /// Output directory after applying the output-root override.
    pub fn output_dir(&self) -> PathBuf {
        if self.output.dir.is_absolute() {
            self.output.dir.clone()
        } else {
            output_root().join(&self.output.dir)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        self.domain_spec().validate()?;
        let g = self.grid()?;
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.time.t_end > 0.0 && self.time.t_end.is_finite()) {
            return bad(format!("time.t_end = {} must be positive", self.time.t_end));
        }
        if !(self.time.cfl > 0.0 && self.time.cfl <= 1.0) {
            return bad(format!("time.cfl = {} must lie in (0, 1]", self.time.cfl));
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("time.dt = {dt} must be positive"));
            }
        }
        if !(self.initial.rho0 > 0.0) || !(self.boundary.rho_b > 0.0) {
            return bad("initial and boundary densities must be positive".into());
        }
        if !self.boundary.u0.is_finite() {
            return bad("boundary.u0 must be finite".into());
        }
        if let Some(b) = &self.body {
            b.shape.validate()?;
            let eroded = erode(&b.shape, self.penalty.r)?;
            let (lx, ly) = (self.domain.lx, self.domain.ly);
            let d = b.shape.wall_clearance(lx, ly);
            if !(d > self.penalty.h) {
                return bad(format!("initial solid is {d} from the walls, needs more than h = {}", self.penalty.h));
            }
            let d_o = eroded.wall_clearance(lx, ly);
            if !(d_o > self.penalty.h + self.penalty.r) {
                return bad(format!("eroded body is {d_o} from the walls, needs more than h + r"));
            }
            if self.penalty.r < 2.0 * g.dx.max(g.dy) {
                return Err(SimError::KernelUnresolved { r: self.penalty.r, min: 2.0 * g.dx.max(g.dy) });
            }
        }
        Ok(())
    }
}
