//! Continuity equation with artificial mass diffusion and the regularized
//! inflow/outflow boundary condition
//! `(-eps grad rho + rho u) . n = rho (u_B.n - [u_B.n]_N) + rho_B [u_B.n]_N`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::fields::{Location, Point, ScalarField, StaggeredGrid, VectorField};
use crate::geometry::BoundaryData;
use crate::linsolve::{pcg, CgSettings, SolveStats};

/// Every approximation knob of the penalized system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyParams {
    /// Pressure coefficient in `p = a rho^gamma`.
    pub a: f64,
    pub gamma: f64,
    /// Artificial pressure weight.
    pub delta: f64,
    pub beta: f64,
    /// Mass diffusion.
    pub eps: f64,
    /// Solidification stiffness.
    pub n: f64,
    /// Mollification / erosion radius.
    pub r: f64,
    /// Sharpness of the smoothed negative part.
    pub sharpness: f64,
    pub mu: f64,
    pub lambda: f64,
    /// Collision margin.
    pub h: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            gamma: 5.0 / 3.0,
            delta: 1e-3,
            beta: 8.0,
            eps: 1e-3,
            n: 1e3,
            r: 0.03,
            sharpness: 64.0,
            mu: 0.1,
            lambda: 0.1,
            h: 0.1,
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        let finite = [
            self.a,
            self.gamma,
            self.delta,
            self.beta,
            self.eps,
            self.n,
            self.r,
            self.sharpness,
            self.mu,
            self.lambda,
            self.h,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("parameters must be finite");
        }
        if self.a < 0.0 {
            return fail("a must be nonnegative");
        }
        if self.gamma <= 1.5 {
            return fail("gamma must exceed 3/2");
        }
        if self.beta <= self.gamma.max(4.5) {
            return fail("beta must exceed max(9/2, gamma)");
        }
        if self.eps <= 0.0 || self.delta <= 0.0 || self.sharpness <= 0.0 {
            return fail("eps, delta and the sharpness N must be positive");
        }
        if self.n < 0.0 {
            return fail("n must be nonnegative");
        }
        if self.mu <= 0.0 || self.mu + self.lambda < 0.0 {
            return fail("viscosities need mu > 0 and mu + lambda >= 0");
        }
        if self.r <= 0.0 || self.h <= 0.0 {
            return fail("r and h must be positive");
        }
        Ok(())
    }
}

/// `C^1` smoothed negative part: `v` below `-1/N`, `0` above `1/N`, the
/// Hermite blend `-(N/4)(v - 1/N)^2` in between.
pub fn negative_part_n(v: f64, n: f64) -> f64 {
    let e = 1.0 / n;
    if v <= -e {
        v
    } else if v >= e {
        0.0
    } else {
        -0.25 * n * (v - e) * (v - e)
    }
}

/// Derivative of [`negative_part_n`].
pub fn negative_part_n_slope(v: f64, n: f64) -> f64 {
    let e = 1.0 / n;
    if v <= -e {
        1.0
    } else if v >= e {
        0.0
    } else {
        -0.5 * n * (v - e)
    }
}

/// Clamps to `[delta, 1/delta]` and adjusts the wall-adjacent cells so that
/// the discrete Robin condition `eps d_n rho = (rho - rho_B)[u_B.n]_N`
/// holds between each boundary cell and its inward neighbor.
pub fn regularize_initial_density(rho0: &ScalarField, params: &PenaltyParams, bc: &BoundaryData) -> ScalarField {
    let (lo, hi) = (params.delta, 1.0 / params.delta);
    let g = rho0.grid;
    let clamped = rho0.map(|v| v.clamp(lo, hi));
    let mut acc = ScalarField::zeros(g, Location::Center);
    let mut count = vec![0u32; acc.data.len()];
    for (k, f) in bc.faces.iter().enumerate() {
        let m = negative_part_n(bc.q[k], params.sharpness);
        let (i, j) = f.cell;
        let (ii, jj, d) = match f.wall {
            crate::geometry::Wall::Left => (i + 1, j, g.dx),
            crate::geometry::Wall::Right => (i - 1, j, g.dx),
            crate::geometry::Wall::Bottom => (i, j + 1, g.dy),
            crate::geometry::Wall::Top => (i, j - 1, g.dy),
        };
        let w = params.eps / d;
        let v = (w * clamped.at(ii, jj) - bc.rho_b[k] * m) / (w - m);
        let c = acc.idx(i, j);
        acc.data[c] += v;
        count[c] += 1;
    }
    let mut out = clamped;
    for c in 0..out.data.len() {
        if count[c] > 0 {
            out.data[c] = (acc.data[c] / count[c] as f64).clamp(lo, hi);
        }
    }
    out
}

/// Face fluxes of one continuity step (flux densities per unit face length).
#[derive(Debug, Clone)]
pub struct MassFluxes {
    /// Upwind `rho u` on interior x-faces, from the old density.
    pub adv_x: ScalarField,
    pub adv_y: ScalarField,
    /// `-eps grad rho` on interior faces, from the new density.
    pub dif_x: ScalarField,
    pub dif_y: ScalarField,
    /// Outward total flux per boundary face, ordered as `bc.faces`.
    pub boundary: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ContinuityStep {
    pub rho: ScalarField,
    pub fluxes: MassFluxes,
    pub solve: SolveStats,
    /// `(sum V (rho' - rho) + dt * boundary outflow - dt * sum V s) / sum V rho'`.
    pub mass_residual: f64,
}

/// Advective CFL limit enforced by every explicit step.
pub const CFL_LIMIT: f64 = 0.5;

pub fn courant_number(u: &VectorField, dt: f64) -> f64 {
    dt * u.max_abs() / u.grid().min_spacing()
}

pub fn check_cfl(u: &VectorField, dt: f64) -> Result<()> {
    let c = courant_number(u, dt);
    if !(c <= CFL_LIMIT) {
        return Err(SimError::CflViolation { courant: c, limit: CFL_LIMIT });
    }
    Ok(())
}

fn upwind_fluxes(rho: &ScalarField, u: &VectorField) -> (ScalarField, ScalarField) {
    let g = rho.grid;
    let mut fx = ScalarField::zeros(g, Location::XFace);
    let mut fy = ScalarField::zeros(g, Location::YFace);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let v = u.ux.at(i, j);
            let up = if v > 0.0 { rho.at(i - 1, j) } else { rho.at(i, j) };
            fx.set(i, j, up * v);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let v = u.uy.at(i, j);
            let up = if v > 0.0 { rho.at(i, j - 1) } else { rho.at(i, j) };
            fy.set(i, j, up * v);
        }
    }
    (fx, fy)
}

/// Per-boundary-face coefficients of the outward flux `alpha rho_cell + beta`.
fn boundary_coefficients(bc: &BoundaryData, params: &PenaltyParams) -> Vec<(f64, f64)> {
    bc.q.iter()
        .zip(&bc.rho_b)
        .map(|(&q, &rb)| {
            let m = negative_part_n(q, params.sharpness);
            (q - m, rb * m)
        })
        .collect()
}

fn flux_divergence(fx: &ScalarField, fy: &ScalarField) -> ScalarField {
    let g = fx.grid;
    let mut out = ScalarField::zeros(g, Location::Center);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.set(i, j, (fx.at(i + 1, j) - fx.at(i, j)) / g.dx + (fy.at(i, j + 1) - fy.at(i, j)) / g.dy);
        }
    }
    out
}

/// Applies `eps * (-Laplacian_Neumann) + diag` on the cell lattice.
fn apply_diffusion(g: StaggeredGrid, eps: f64, diag: &[f64], v: &[f64], out: &mut [f64], exec: Exec) {
    let (cx, cy) = (eps / (g.dx * g.dx), eps / (g.dy * g.dy));
    let nx = g.nx;
    let ny = g.ny;
    exec.fill_rows(out, nx, |j, row| {
        for (i, o) in row.iter_mut().enumerate() {
            let k = j * nx + i;
            let mut s = diag[k] * v[k];
            if i > 0 {
                s -= cx * v[k - 1];
            }
            if i + 1 < nx {
                s -= cx * v[k + 1];
            }
            if j > 0 {
                s -= cy * v[k - nx];
            }
            if j + 1 < ny {
                s -= cy * v[k + nx];
            }
            *o = s;
        }
    });
}

fn neighbor_count_weight(g: StaggeredGrid, eps: f64, i: usize, j: usize) -> f64 {
    let (cx, cy) = (eps / (g.dx * g.dx), eps / (g.dy * g.dy));
    let mut s = 0.0;
    if i > 0 {
        s += cx;
    }
    if i + 1 < g.nx {
        s += cx;
    }
    if j > 0 {
        s += cy;
    }
    if j + 1 < g.ny {
        s += cy;
    }
    s
}

/// One step: explicit upwind advection, then backward-Euler diffusion with
/// the implicit Robin boundary flux. `source` is a volumetric mass source.
pub fn continuity_step(
    rho: &ScalarField,
    u: &VectorField,
    params: &PenaltyParams,
    dt: f64,
    bc: &BoundaryData,
    source: Option<&ScalarField>,
    exec: Exec,
) -> Result<ContinuityStep> {
    let g = rho.grid;
    check_cfl(u, dt)?;
    let v = g.cell_volume();

    let mut outflow = vec![0.0; g.nx * g.ny];
    for j in 0..g.ny {
        for i in 1..g.nx {
            let s = u.ux.at(i, j);
            let donor = if s > 0.0 { i - 1 } else { i };
            outflow[j * g.nx + donor] += s.abs() * g.dy;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let s = u.uy.at(i, j);
            let donor = if s > 0.0 { j - 1 } else { j };
            outflow[donor * g.nx + i] += s.abs() * g.dx;
        }
    }
    let worst = outflow.iter().fold(0.0f64, |m, &o| m.max(dt * o / v));
    if worst > 1.0 {
        return Err(SimError::CflViolation { courant: worst, limit: 1.0 });
    }

    let (adv_x, adv_y) = upwind_fluxes(rho, u);
    let div = flux_divergence(&adv_x, &adv_y);
    let mut star = rho.zip_map(&div, |r, d| r - dt * d);
    if let Some(s) = source {
        for k in 0..star.data.len() {
            star.data[k] += dt * s.data[k];
        }
    }

    let coef = boundary_coefficients(bc, params);
    let mut diag = vec![0.0; g.nx * g.ny];
    let mut rhs = vec![0.0; g.nx * g.ny];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = j * g.nx + i;
            diag[k] = 1.0 / dt + neighbor_count_weight(g, params.eps, i, j);
            rhs[k] = star.data[k] / dt;
        }
    }
    for (f, &(alpha, beta)) in bc.faces.iter().zip(&coef) {
        let k = f.cell.1 * g.nx + f.cell.0;
        diag[k] += f.area * alpha / v;
        rhs[k] -= f.area * beta / v;
    }
    let mut x = star.data.clone();
    let settings = CgSettings { tol: 1e-12, max_iter: 10 * g.nx * g.ny, exec };
    let stats = pcg(|p, out| apply_diffusion(g, params.eps, &diag, p, out, exec), &diag, &rhs, &mut x, settings)?;
    let new = ScalarField { grid: g, loc: Location::Center, data: x };
    if let Some(k) = new.data.iter().position(|r| !r.is_finite() || *r < 0.0) {
        if new.data[k] < -1e-12 * rho.max().max(1.0) || !new.data[k].is_finite() {
            return Err(SimError::NegativeDensity(new.data[k]));
        }
    }

    let mut dif_x = ScalarField::zeros(g, Location::XFace);
    let mut dif_y = ScalarField::zeros(g, Location::YFace);
    for j in 0..g.ny {
        for i in 1..g.nx {
            dif_x.set(i, j, -params.eps * (new.at(i, j) - new.at(i - 1, j)) / g.dx);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            dif_y.set(i, j, -params.eps * (new.at(i, j) - new.at(i, j - 1)) / g.dy);
        }
    }
    let boundary: Vec<f64> =
        bc.faces.iter().zip(&coef).map(|(f, &(alpha, beta))| alpha * new.at(f.cell.0, f.cell.1) + beta).collect();

    let fluxes = MassFluxes { adv_x, adv_y, dif_x, dif_y, boundary };
    let src = source.map(|s| s.data.as_slice());
    let mass_residual = mass_budget_residual(rho, &new, &fluxes, bc, dt, src);
    Ok(ContinuityStep { rho: new, fluxes, solve: stats, mass_residual })
}

/// Relative global mass-budget defect of one step.
pub fn mass_budget_residual(
    old: &ScalarField,
    new: &ScalarField,
    fluxes: &MassFluxes,
    bc: &BoundaryData,
    dt: f64,
    source: Option<&[f64]>,
) -> f64 {
    let v = old.grid.cell_volume();
    let n = old.data.len();
    let change = Exec::Serial.sum(n, |k| v * (new.data[k] - old.data[k]));
    let out = Exec::Serial.sum(bc.faces.len(), |k| bc.faces[k].area * fluxes.boundary[k]);
    let produced = source.map_or(0.0, |s| Exec::Serial.sum(n, |k| v * s[k]));
    let total = Exec::Serial.sum(n, |k| v * new.data[k]);
    (change + dt * out - dt * produced) / total.max(f64::MIN_POSITIVE)
}

/// Semi-discrete right-hand side `d rho / dt` of the scheme at a state.
pub fn continuity_rate(rho: &ScalarField, u: &VectorField, params: &PenaltyParams, bc: &BoundaryData) -> ScalarField {
    let g = rho.grid;
    let (fx, fy) = upwind_fluxes(rho, u);
    let mut rate = flux_divergence(&fx, &fy).map(|d| -d);
    let (cx, cy) = (params.eps / (g.dx * g.dx), params.eps / (g.dy * g.dy));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = rho.at(i, j);
            let mut s = 0.0;
            if i > 0 {
                s += cx * (rho.at(i - 1, j) - c);
            }
            if i + 1 < g.nx {
                s += cx * (rho.at(i + 1, j) - c);
            }
            if j > 0 {
                s += cy * (rho.at(i, j - 1) - c);
            }
            if j + 1 < g.ny {
                s += cy * (rho.at(i, j + 1) - c);
            }
            rate.set(i, j, rate.at(i, j) + s);
        }
    }
    let v = g.cell_volume();
    for (f, (alpha, beta)) in bc.faces.iter().zip(boundary_coefficients(bc, params)) {
        let (i, j) = f.cell;
        rate.set(i, j, rate.at(i, j) - f.area * (alpha * rho.at(i, j) + beta) / v);
    }
    rate
}

/// Renormalizing functions `b` for the renormalized-equation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Renormalizer {
    Identity,
    Constant(f64),
    Square,
    /// `z log z`, admissible at the diagnostic level.
    ZLogZ,
}

impl Renormalizer {
    pub fn b(&self, z: f64) -> f64 {
        match *self {
            Renormalizer::Identity => z,
            Renormalizer::Constant(c) => c,
            Renormalizer::Square => z * z,
            Renormalizer::ZLogZ => {
                if z > 0.0 {
                    z * z.ln()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn db(&self, z: f64) -> f64 {
        match *self {
            Renormalizer::Identity => 1.0,
            Renormalizer::Constant(_) => 0.0,
            Renormalizer::Square => 2.0 * z,
            Renormalizer::ZLogZ => z.max(f64::MIN_POSITIVE).ln() + 1.0,
        }
    }

    pub fn ddb(&self, z: f64) -> f64 {
        match *self {
            Renormalizer::Identity | Renormalizer::Constant(_) => 0.0,
            Renormalizer::Square => 2.0,
            Renormalizer::ZLogZ => 1.0 / z.max(f64::MIN_POSITIVE),
        }
    }
}

/// One recorded state of a run: time, density, and the velocity that
/// advected the density over the following step.
#[derive(Debug, Clone)]
pub struct RecordedState {
    pub t: f64,
    pub rho: ScalarField,
    pub u: VectorField,
}

/// Discrete defect of the renormalized continuity equation tested with
/// `psi(t, x)`, summed over the recorded steps. Convective terms use the
/// old density (explicit advection), diffusive and boundary terms the new
/// one (implicit diffusion); `psi` and its time derivative are taken at the
/// step midpoint.
pub fn renormalized_residual(
    b: Renormalizer,
    history: &[RecordedState],
    psi: &dyn Fn(f64, Point) -> f64,
    params: &PenaltyParams,
    bc: &BoundaryData,
) -> Result<f64> {
    if history.len() < 2 {
        return Err(SimError::HistoryTooShort(history.len()));
    }
    let g = history[0].rho.grid;
    let v = g.cell_volume();
    let mut total = 0.0;
    for w in history.windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        let dt = s1.t - s0.t;
        let tm = 0.5 * (s0.t + s1.t);
        let (r0, r1, u) = (&s0.rho, &s1.rho, &s0.u);
        let psi_at = |t: f64, i: usize, j: usize| psi(t, g.position(Location::Center, i, j));
        let dpsi = |i: usize, j: usize| (psi_at(s1.t, i, j) - psi_at(s0.t, i, j)) / dt;
        let pm = |i: usize, j: usize| psi_at(tm, i, j);

        let mut time = 0.0;
        let mut conv = 0.0;
        let mut diff = 0.0;
        let mut defect = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (a0, a1) = (r0.at(i, j), r1.at(i, j));
                time += v * (psi_at(s1.t, i, j) * b.b(a1) - psi_at(s0.t, i, j) * b.b(a0));
                time -= dt * v * dpsi(i, j) * 0.5 * (b.b(a0) + b.b(a1));
                let divu = (u.ux.at(i + 1, j) - u.ux.at(i, j)) / g.dx + (u.uy.at(i, j + 1) - u.uy.at(i, j)) / g.dy;
                conv += dt * v * pm(i, j) * (b.db(a0) * a0 - b.b(a0)) * divu;
                // b''|grad rho|^2 at the center from the adjacent face gradients
                let mut gx2 = 0.0;
                let mut gy2 = 0.0;
                if i > 0 {
                    gx2 += 0.5 * ((a1 - r1.at(i - 1, j)) / g.dx).powi(2);
                }
                if i + 1 < g.nx {
                    gx2 += 0.5 * ((r1.at(i + 1, j) - a1) / g.dx).powi(2);
                }
                if j > 0 {
                    gy2 += 0.5 * ((a1 - r1.at(i, j - 1)) / g.dy).powi(2);
                }
                if j + 1 < g.ny {
                    gy2 += 0.5 * ((r1.at(i, j + 1) - a1) / g.dy).powi(2);
                }
                defect += dt * v * pm(i, j) * params.eps * b.ddb(a1) * (gx2 + gy2);
            }
        }
        // interior faces: -b(rho_up) u . grad psi  and  eps b'(rho) grad rho . grad psi
        for j in 0..g.ny {
            for i in 1..g.nx {
                let s = u.ux.at(i, j);
                let up = if s > 0.0 { r0.at(i - 1, j) } else { r0.at(i, j) };
                let dp = pm(i, j) - pm(i - 1, j);
                conv -= dt * g.dy * b.b(up) * s * dp;
                let (l, r) = (r1.at(i - 1, j), r1.at(i, j));
                diff += dt * g.dy * params.eps * 0.5 * (b.db(l) + b.db(r)) * (r - l) / g.dx * dp;
            }
        }
        for j in 1..g.ny {
            for i in 0..g.nx {
                let s = u.uy.at(i, j);
                let up = if s > 0.0 { r0.at(i, j - 1) } else { r0.at(i, j) };
                let dp = pm(i, j) - pm(i, j - 1);
                conv -= dt * g.dx * b.b(up) * s * dp;
                let (l, r) = (r1.at(i, j - 1), r1.at(i, j));
                diff += dt * g.dx * params.eps * 0.5 * (b.db(l) + b.db(r)) * (r - l) / g.dy * dp;
            }
        }
        // boundary: psi [b(rho) u_B.n - b'(rho)(rho - rho_B)[u_B.n]_N]
        let mut bnd = 0.0;
        for (k, f) in bc.faces.iter().enumerate() {
            let (i, j) = f.cell;
            let c = r1.at(i, j);
            let m = negative_part_n(bc.q[k], params.sharpness);
            let robin = -b.db(c) * (c - bc.rho_b[k]) * m;
            bnd += dt * f.area * pm(i, j) * (b.b(c) * bc.q[k] + robin);
        }
        total += time + conv + diff + defect + bnd;
    }
    Ok(total)
}
