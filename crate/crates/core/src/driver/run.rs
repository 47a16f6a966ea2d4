//! The time loop: continuity, momentum, body, diagnostics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{InitialVelocity, RunConfig};
use crate::body::{body_step, chi_field, collision_guard, t0_lower_bound, BodyState};
use crate::continuity::{continuity_step, regularize_initial_density, PenaltyParams};
use crate::diagnostics::{
    fluid_mask, interior_pressure_norm, ledger_step, rigidity_measure, state_terms, surface_force_torque, EnergyLedger,
    SurfaceLoad,
};
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::fields::{write_snapshot, write_vtk, Location, MollifierKernel, ScalarField, StaggeredGrid, VectorField};
use crate::geometry::{signed_distance_primitive, BoundaryData, ExtensionReport, Wall};
use crate::momentum::{
    momentum_step, viscosity_fields, MomentumOptions, PinnedFaces, PressureLaw, ViscosityModel, ViscousOperator,
};

/// One line of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub dissipation: f64,
    pub eps_term: f64,
    pub outflow_term: f64,
    pub convexity_slack_min: f64,
    pub mass_residual: f64,
    pub energy_residual: f64,
    pub rigidity: f64,
    pub pnorm_gamma: f64,
    pub pnorm_beta: f64,
    #[serde(rename = "Fx")]
    pub fx: f64,
    #[serde(rename = "Fy")]
    pub fy: f64,
    pub torque: f64,
    pub margin: f64,
}

/// One line of `body.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyRow {
    pub t: f64,
    #[serde(rename = "X.x")]
    pub x: f64,
    #[serde(rename = "X.y")]
    pub y: f64,
    pub theta: f64,
    #[serde(rename = "V.x")]
    pub vx: f64,
    #[serde(rename = "V.y")]
    pub vy: f64,
    pub w: f64,
    pub rigidity_defect: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Horizon,
    Collision,
    MaxSteps,
}

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub t_end: f64,
    /// Time of the last recorded state; the discrete `T_max` after a collision stop.
    pub final_t: f64,
    pub steps: usize,
    pub stop: StopReason,
    pub dt_min: f64,
    pub dt_max: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_energy_residual: f64,
    pub worst_energy_residual: f64,
    pub min_dissipation: f64,
    pub min_eps_term: f64,
    pub min_outflow_term: f64,
    pub min_convexity_slack: f64,
    pub max_mass_residual: f64,
    pub final_rigidity: f64,
    pub max_pnorm_gamma: f64,
    pub max_pnorm_beta: f64,
    pub max_velocity: f64,
    pub final_force: [f64; 2],
    pub final_torque: f64,
    pub body: Option<BodySummary>,
    pub extension: ExtensionReport,
    pub max_momentum_iterations: usize,
    pub max_continuity_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BodySummary {
    /// `dist(S_0, boundary)`.
    pub initial_distance: f64,
    pub initial_margin: f64,
    pub final_margin: f64,
    pub min_margin: f64,
    /// Measured velocity proxy `|V|_{L^2} + R |w|_{L^2}` over the run.
    pub c_bound: f64,
    /// Origin of `c_bound`; always the measured proxy, not an a priori constant.
    pub c_bound_source: &'static str,
    /// `min(T, ((d - h) / c)^2)` with the measured proxy, or `T` for a body at rest.
    pub t0_lower_bound: f64,
    pub max_isometry_defect: f64,
    pub max_rigidity_defect: f64,
    /// `int_{S(t)} rho` at the end of the run.
    pub mass_proxy: f64,
    pub final_x: [f64; 2],
    pub final_theta: f64,
}

/// Everything a run produced, kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub body_rows: Vec<BodyRow>,
    pub rho: ScalarField,
    pub u: VectorField,
    pub body: Option<BodyState>,
}

/// Live state of a run.
pub struct Simulation {
    pub config: RunConfig,
    pub params: PenaltyParams,
    pub grid: StaggeredGrid,
    pub bc: BoundaryData,
    pub rho: ScalarField,
    pub u: VectorField,
    pub body: Option<BodyState>,
    pub chi: ScalarField,
    pub t: f64,
    pub steps: usize,
    kernel: Option<MollifierKernel>,
    pinned: Option<PinnedFaces>,
    visc: ViscousOperator,
    model: ViscosityModel,
    exec: Exec,
    ledger: EnergyLedger,
    chi_margin: f64,
    probe_offset: f64,
    fluid_margin: f64,
    v_sq: f64,
    w_sq: f64,
}

/// Result of one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub dt: f64,
    pub row: DiagnosticsRow,
    pub body_row: Option<BodyRow>,
    pub momentum_iterations: usize,
    pub continuity_iterations: usize,
}

impl Simulation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let params = config.penalty;
        let grid = config.grid()?;
        let domain = config.domain_spec();
        let rho_b = config.boundary.rho_b;
        let bc = BoundaryData::new(&domain, grid, config.boundary.velocity(config.domain.ly), |_, _| rho_b)?;

        let rho0 = ScalarField::constant(grid, Location::Center, config.initial.rho0);
        let rho = regularize_initial_density(&rho0, &params, &bc);
        let mut u = match config.initial.velocity {
            InitialVelocity::Rest => VectorField::zeros(grid),
            InitialVelocity::Extension => bc.u_inf.clone(),
            InitialVelocity::Inflow => {
                let profile = config.boundary.velocity(config.domain.ly);
                VectorField::from_fn(grid, |p| profile(Wall::Left, p))
            }
        };
        bc.apply_dirichlet(&mut u);

        let two_dx = 2.0 * grid.dx.max(grid.dy);
        let body = match &config.body {
            Some(b) => {
                let lattice = b.lattice.unwrap_or(params.r);
                Some(BodyState::new(b.shape, params.r, b.rho_s, b.boundary_markers, lattice)?)
            }
            None => None,
        };
        let kernel = match &body {
            Some(_) => Some(MollifierKernel::new(&grid, params.r)?),
            None => None,
        };
        let pinned = match (&config.body, &body) {
            (Some(b), Some(state)) if b.fixed => Some(pin_inside(grid, state)),
            _ => None,
        };
        if let Some(p) = &pinned {
            for k in 0..u.ux.data.len() {
                if p.ux[k] {
                    u.ux.data[k] = 0.0;
                }
            }
            for k in 0..u.uy.data.len() {
                if p.uy[k] {
                    u.uy.data[k] = 0.0;
                }
            }
        }
        let chi = match &body {
            Some(b) => chi_field(b, &grid)?,
            None => ScalarField::constant(grid, Location::Center, f64::NEG_INFINITY),
        };
        let model = ViscosityModel::from_params(&params);
        let (mu, la) = viscosity_fields(&chi, &model);
        let visc = ViscousOperator::new(&mu, &la);
        let ledger = EnergyLedger::new(state_terms(&rho, &u, &visc, &params, &bc));
        Ok(Self {
            config: config.clone(),
            params,
            grid,
            bc,
            rho,
            u,
            body,
            chi,
            t: 0.0,
            steps: 0,
            kernel,
            pinned,
            visc,
            model,
            exec: config.exec(),
            ledger,
            chi_margin: config.diagnostics.chi_margin.unwrap_or(two_dx),
            probe_offset: config.diagnostics.probe_offset.unwrap_or(two_dx),
            fluid_margin: config.diagnostics.fluid_margin.unwrap_or(two_dx),
            v_sq: 0.0,
            w_sq: 0.0,
        })
    }

    /// Time step for the next step: fixed, or the acoustic CFL bound, clipped to the horizon.
    pub fn next_dt(&self) -> f64 {
        let remaining = self.config.time.t_end - self.t;
        let dt = match self.config.time.dt {
            Some(dt) => dt,
            None => {
                let law = PressureLaw::from_params(&self.params);
                let c = self.rho.data.iter().fold(0.0f64, |m, &r| m.max(law.sound_speed_sq(r).max(0.0).sqrt()));
                self.config.time.cfl * self.grid.min_spacing() / (self.u.max_abs() + c)
            }
        };
        if remaining < dt * (1.0 + 1e-9) {
            remaining
        } else {
            dt
        }
    }

    pub fn finished(&self) -> bool {
        self.config.time.t_end - self.t <= 1e-12 * self.config.time.t_end
    }

    pub fn guard_margin(&self) -> f64 {
        match &self.body {
            Some(b) => {
                collision_guard(b, self.config.domain.lx, self.config.domain.ly, self.params.h, self.params.r).margin
            }
            None => f64::NAN,
        }
    }

    /// Diagnostics of the current state with the given step data.
    pub fn row(&self, mass_residual: f64, energy_residual: f64) -> DiagnosticsRow {
        let terms = self.ledger.last;
        let rigidity = if self.body.is_some() { rigidity_measure(&self.u, &self.chi, self.chi_margin) } else { 0.0 };
        let mask = fluid_mask(&self.chi, self.params.r, self.fluid_margin, self.params.h);
        let (pg, pb) = interior_pressure_norm(&self.rho, &mask, &self.params);
        let load = self.load();
        DiagnosticsRow {
            t: self.t,
            energy: terms.energy,
            dissipation: terms.dissipation,
            eps_term: terms.eps_term,
            outflow_term: terms.outflow_term,
            convexity_slack_min: terms.convexity_slack_min,
            mass_residual,
            energy_residual,
            rigidity,
            pnorm_gamma: pg,
            pnorm_beta: pb,
            fx: load.force[0],
            fy: load.force[1],
            torque: load.torque,
            margin: self.guard_margin(),
        }
    }

    fn load(&self) -> SurfaceLoad {
        let nan = SurfaceLoad { force: [f64::NAN; 2], torque: f64::NAN };
        match &self.body {
            Some(b) => surface_force_torque(&self.rho, &self.u, b, &self.params, self.probe_offset).unwrap_or(nan),
            None => nan,
        }
    }

    pub fn body_row(&self) -> Option<BodyRow> {
        self.body.as_ref().map(|b| BodyRow {
            t: self.t,
            x: b.x[0],
            y: b.x[1],
            theta: b.theta,
            vx: b.v[0],
            vy: b.v[1],
            w: b.w,
            rigidity_defect: b.rigidity_defect,
            margin: self.guard_margin(),
        })
    }

    /// Advances one step.
    pub fn advance(&mut self) -> Result<StepRecord> {
        let dt = self.next_dt();
        let cont = continuity_step(&self.rho, &self.u, &self.params, dt, &self.bc, None, self.exec)?;
        let opts = MomentumOptions { source: None, pinned: self.pinned.as_ref(), exec: self.exec };
        let mom = momentum_step(&self.rho, &cont.rho, &self.u, &self.visc, &self.params, dt, &self.bc, &opts)?;
        let moving = self.config.body.as_ref().is_some_and(|b| !b.fixed);
        if moving {
            let (body, kernel) = (self.body.as_ref().expect("body"), self.kernel.as_ref().expect("kernel"));
            let next = body_step(body, &mom.u, kernel, dt)?;
            self.v_sq += dt * (next.v[0] * next.v[0] + next.v[1] * next.v[1]);
            self.w_sq += dt * next.w * next.w;
            self.chi = chi_field(&next, &self.grid)?;
            let (mu, la) = viscosity_fields(&self.chi, &self.model);
            self.visc = ViscousOperator::new(&mu, &la);
            self.body = Some(next);
        }
        self.rho = cont.rho;
        self.u = mom.u;
        self.t += dt;
        self.steps += 1;
        let terms = state_terms(&self.rho, &self.u, &self.visc, &self.params, &self.bc);
        let entry = ledger_step(&mut self.ledger, terms, self.t, dt);
        Ok(StepRecord {
            dt,
            row: self.row(cont.mass_residual, entry.residual),
            body_row: self.body_row(),
            momentum_iterations: mom.solve.iterations,
            continuity_iterations: cont.solve.iterations,
        })
    }

    /// Measured velocity proxy `|V|_{L^2(0,t)} + R_O |w|_{L^2(0,t)}`.
    pub fn velocity_proxy(&self) -> f64 {
        let reach = self.body.as_ref().map_or(0.0, |b| b.eroded.circumradius());
        self.v_sq.sqrt() + reach * self.w_sq.sqrt()
    }

    fn write_state(&self, dir: &Path, tag: &str) -> Result<()> {
        write_snapshot(&dir.join(format!("rho_{tag}.txt")), &self.rho)?;
        write_snapshot(&dir.join(format!("ux_{tag}.txt")), &self.u.ux)?;
        write_snapshot(&dir.join(format!("uy_{tag}.txt")), &self.u.uy)?;
        if self.body.is_some() {
            write_snapshot(&dir.join(format!("chi_{tag}.txt")), &self.chi)?;
        }
        Ok(())
    }
}

/// Faces whose positions lie inside the physical solid, pinned to zero.
fn pin_inside(grid: StaggeredGrid, body: &BodyState) -> PinnedFaces {
    let solid = body.solid();
    let mark = |loc: Location| -> Vec<bool> {
        let (w, h) = grid.shape(loc);
        (0..w * h).map(|k| signed_distance_primitive(grid.position(loc, k % w, k / w), &solid) > 0.0).collect()
    };
    PinnedFaces { ux: mark(Location::XFace), uy: mark(Location::YFace), value: VectorField::zeros(grid) }
}

/// Runs `config` to completion. With `out`, snapshots are written as the run
/// proceeds and the state is dumped if a step fails.
pub fn execute(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let mut sim = Simulation::new(config)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        sim.write_state(dir, "00000")?;
    }
    let mut diagnostics = vec![sim.row(0.0, 0.0)];
    let mut body_rows: Vec<BodyRow> = sim.body_row().into_iter().collect();
    let initial_distance = config.body.as_ref().map(|b| b.shape.wall_clearance(config.domain.lx, config.domain.ly));
    let initial_margin = sim.guard_margin();
    let (mut dt_min, mut dt_max) = (f64::INFINITY, 0.0f64);
    let (mut it_m, mut it_c) = (0, 0);
    let mut max_iso = 0.0f64;
    let mut max_def = 0.0f64;
    let mut stop = StopReason::Horizon;
    while !sim.finished() {
        if config.time.max_steps.is_some_and(|m| sim.steps >= m) {
            stop = StopReason::MaxSteps;
            break;
        }
        let rec = match sim.advance() {
            Ok(r) => r,
            Err(e) => {
                if let Some(dir) = out {
                    dump_failure(&sim, dir, &e);
                }
                return Err(e);
            }
        };
        dt_min = dt_min.min(rec.dt);
        dt_max = dt_max.max(rec.dt);
        it_m = it_m.max(rec.momentum_iterations);
        it_c = it_c.max(rec.continuity_iterations);
        diagnostics.push(rec.row);
        if let Some(b) = &sim.body {
            max_iso = max_iso.max(b.isometry_defect());
            max_def = max_def.max(b.rigidity_defect);
        }
        body_rows.extend(rec.body_row);
        if let Some(dir) = out {
            let every = config.output.snapshot_every;
            if every > 0 && sim.steps % every == 0 {
                sim.write_state(dir, &format!("{:05}", sim.steps))?;
            }
        }
        if rec.row.margin < 0.0 {
            stop = StopReason::Collision;
            break;
        }
    }
    if let Some(dir) = out {
        sim.write_state(dir, "final")?;
        write_vtk(&dir.join("rho_final.vtk"), "rho", &sim.rho)?;
    }

    let fold = |f: fn(&DiagnosticsRow) -> f64| diagnostics.iter().map(f).fold(f64::INFINITY, f64::min);
    let last = *diagnostics.last().expect("initial row");
    let body = match (&sim.body, initial_distance) {
        (Some(b), Some(d)) => {
            let c = sim.velocity_proxy();
            let t0 = if c > 0.0 { t0_lower_bound(d, sim.params.h, c, config.time.t_end)? } else { config.time.t_end };
            let solid = b.solid();
            let v = sim.grid.cell_volume();
            let mass_proxy = (0..sim.rho.data.len())
                .filter(|&k| signed_distance_primitive(sim.rho.position(k), &solid) > 0.0)
                .map(|k| v * sim.rho.data[k])
                .sum();
            Some(BodySummary {
                initial_distance: d,
                initial_margin,
                final_margin: last.margin,
                min_margin: fold(|r| r.margin),
                c_bound: c,
                c_bound_source: "measured velocity proxy",
                t0_lower_bound: t0,
                max_isometry_defect: max_iso,
                max_rigidity_defect: max_def,
                mass_proxy,
                final_x: b.x,
                final_theta: b.theta,
            })
        }
        _ => None,
    };
    let report = RunReport {
        t_end: config.time.t_end,
        final_t: sim.t,
        steps: sim.steps,
        stop,
        dt_min,
        dt_max,
        initial_energy: diagnostics[0].energy,
        final_energy: last.energy,
        final_energy_residual: last.energy_residual,
        worst_energy_residual: diagnostics.iter().map(|r| r.energy_residual).fold(0.0, |a: f64, b| {
            if b.abs() > a.abs() {
                b
            } else {
                a
            }
        }),
        min_dissipation: fold(|r| r.dissipation),
        min_eps_term: fold(|r| r.eps_term),
        min_outflow_term: fold(|r| r.outflow_term),
        min_convexity_slack: fold(|r| r.convexity_slack_min),
        max_mass_residual: diagnostics.iter().map(|r| r.mass_residual.abs()).fold(0.0, f64::max),
        final_rigidity: last.rigidity,
        max_pnorm_gamma: diagnostics.iter().map(|r| r.pnorm_gamma).fold(0.0, f64::max),
        max_pnorm_beta: diagnostics.iter().map(|r| r.pnorm_beta).fold(0.0, f64::max),
        max_velocity: sim.u.max_abs(),
        final_force: [last.fx, last.fy],
        final_torque: last.torque,
        body,
        extension: sim.bc.extension,
        max_momentum_iterations: it_m,
        max_continuity_iterations: it_c,
    };
    Ok(RunOutcome { report, diagnostics, body_rows, rho: sim.rho, u: sim.u, body: sim.body })
}

fn dump_failure(sim: &Simulation, dir: &Path, err: &SimError) {
    let _ = sim.write_state(dir, "failure");
    let note = serde_json::json!({ "error": err.to_string(), "t": sim.t, "steps": sim.steps });
    let _ = fs::write(dir.join("failure.json"), serde_json::to_string_pretty(&note).unwrap_or_default());
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SimError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| SimError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| SimError::Io(e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| SimError::Io(e.to_string()))).collect()
}

/// Runs `config` into its output directory and writes `diagnostics.csv`,
/// `body.csv`, snapshots and `report.json`.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let dir = config.output_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), config.to_toml())?;
    let outcome = execute(config, Some(&dir))?;
    write_outputs(&dir, &outcome)?;
    Ok(outcome.report)
}

pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    write_csv(&dir.join("diagnostics.csv"), &outcome.diagnostics)?;
    write_csv(&dir.join("body.csv"), &outcome.body_rows)?;
    let json = serde_json::to_string_pretty(&outcome.report).map_err(|e| SimError::Io(e.to_string()))?;
    fs::write(dir.join("report.json"), json)?;
    Ok(())
}
