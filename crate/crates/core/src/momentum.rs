//! Momentum balance with solidification viscosity, artificial pressure and
//! the `-eps grad rho . grad u` coupling.
//!
//! The viscous term is the weak form
//! `a(u, v) = sum_cells V [2 mu (Dxx Dxx' + Dyy Dyy') + lambda div div']
//!          + sum_nodes W 4 mu Dxy Dxy'`,
//! so the implicit operator is symmetric and positive definite whenever
//! `mu > 0` and `mu + lambda >= 0`.

use crate::continuity::{check_cfl, PenaltyParams};
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::fields::{sym_gradient, Location, ScalarField, StaggeredGrid, TensorField, VectorField, WallTraces};
use crate::geometry::{BoundaryData, CutoffProfile};
use crate::linsolve::{pcg, CgSettings, SolveStats};

/// `H(z) = z^2` for `z > 0`, zero otherwise.
pub fn ramp_h(z: f64) -> f64 {
    if z > 0.0 {
        z * z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityModel {
    pub mu: f64,
    pub lambda: f64,
    pub n: f64,
    pub r: f64,
    pub cutoff: CutoffProfile,
}

impl ViscosityModel {
    pub fn from_params(p: &PenaltyParams) -> Self {
        Self { mu: p.mu, lambda: p.lambda, n: p.n, r: p.r, cutoff: CutoffProfile::for_margin(p.h) }
    }

    /// Penalty increment `n H(chi + r) xi` at a point.
    pub fn increment(&self, chi: f64, wall_distance: f64) -> f64 {
        let xi = self.cutoff.value(wall_distance);
        if xi == 0.0 {
            return 0.0;
        }
        self.n * ramp_h(chi + self.r) * xi
    }
}

/// Cell-centered `(mu_n, lambda_n)` from the solidification indicator.
pub fn viscosity_fields(chi: &ScalarField, model: &ViscosityModel) -> (ScalarField, ScalarField) {
    let g = chi.grid;
    let mut mu = ScalarField::zeros(g, chi.loc);
    let mut la = ScalarField::zeros(g, chi.loc);
    for k in 0..chi.data.len() {
        let inc = model.increment(chi.data[k], g.wall_distance(chi.position(k)));
        mu.data[k] = model.mu + inc;
        la.data[k] = model.lambda + inc;
    }
    (mu, la)
}

/// Barotropic law `p = a rho^gamma` with the artificial part `delta rho^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    pub a: f64,
    pub gamma: f64,
    pub delta: f64,
    pub beta: f64,
}

impl PressureLaw {
    pub fn from_params(p: &PenaltyParams) -> Self {
        Self { a: p.a, gamma: p.gamma, delta: p.delta, beta: p.beta }
    }

    pub fn p(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    pub fn p_delta(&self, rho: f64) -> f64 {
        self.p(rho) + self.delta * rho.powf(self.beta)
    }

    /// Pressure potential `P = a rho^gamma / (gamma - 1)`.
    pub fn potential(&self, rho: f64) -> f64 {
        self.p(rho) / (self.gamma - 1.0)
    }

    pub fn potential_delta(&self, rho: f64) -> f64 {
        self.potential(rho) + self.delta * rho.powf(self.beta) / (self.beta - 1.0)
    }

    /// `P_delta'`.
    pub fn potential_slope(&self, rho: f64) -> f64 {
        self.a * self.gamma / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0)
            + self.delta * self.beta / (self.beta - 1.0) * rho.powf(self.beta - 1.0)
    }

    /// `p_delta'`, the squared sound speed.
    pub fn sound_speed_sq(&self, rho: f64) -> f64 {
        self.a * self.gamma * rho.powf(self.gamma - 1.0) + self.delta * self.beta * rho.powf(self.beta - 1.0)
    }

    /// `P_delta(b) - P_delta'(a)(b - a) - P_delta(a)`, nonnegative by convexity.
    pub fn convexity_slack(&self, rho: f64, rho_b: f64) -> f64 {
        self.potential_delta(rho_b) - self.potential_slope(rho) * (rho_b - rho) - self.potential_delta(rho)
    }
}

pub fn pressure_p(rho: f64, params: &PenaltyParams) -> Result<f64> {
    if rho < 0.0 {
        return Err(SimError::NegativeDensity(rho));
    }
    Ok(PressureLaw::from_params(params).p_delta(rho))
}

#[allow(non_snake_case)]
pub fn pressure_P(rho: f64, params: &PenaltyParams) -> Result<f64> {
    if rho < 0.0 {
        return Err(SimError::NegativeDensity(rho));
    }
    Ok(PressureLaw::from_params(params).potential_delta(rho))
}

/// `S = 2 mu_n D(u) + lambda_n div u Id` at cell centers.
pub fn stress(u: &VectorField, mu_n: &ScalarField, lambda_n: &ScalarField) -> TensorField {
    let d = sym_gradient(u);
    let mut s = TensorField::zeros(u.grid());
    for k in 0..d.xx.data.len() {
        let div = d.xx.data[k] + d.yy.data[k];
        let (m, l) = (mu_n.data[k], lambda_n.data[k]);
        s.xx.data[k] = 2.0 * m * d.xx.data[k] + l * div;
        s.yy.data[k] = 2.0 * m * d.yy.data[k] + l * div;
        s.xy.data[k] = 2.0 * m * d.xy.data[k];
    }
    s
}

/// Variable-coefficient viscous operator on the MAC grid.
#[derive(Debug, Clone)]
pub struct ViscousOperator {
    grid: StaggeredGrid,
    mu: Vec<f64>,
    lambda: Vec<f64>,
    /// `4 W_n mu_n` per node, `mu_n` the mean of the adjacent cells.
    node_coef: Vec<f64>,
}

impl ViscousOperator {
    pub fn new(mu_n: &ScalarField, lambda_n: &ScalarField) -> Self {
        let g = mu_n.grid;
        let mut node_coef = vec![0.0; (g.nx + 1) * (g.ny + 1)];
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let mut s = 0.0;
                let mut c = 0;
                for (ci, cj) in
                    [(i.wrapping_sub(1), j.wrapping_sub(1)), (i, j.wrapping_sub(1)), (i.wrapping_sub(1), j), (i, j)]
                {
                    if ci < g.nx && cj < g.ny {
                        s += mu_n.at(ci, cj);
                        c += 1;
                    }
                }
                node_coef[j * (g.nx + 1) + i] = 4.0 * g.weight(Location::Node, i, j) * s / c as f64;
            }
        }
        Self { grid: g, mu: mu_n.data.clone(), lambda: lambda_n.data.clone(), node_coef }
    }

    /// Constant-coefficient operator.
    pub fn uniform(grid: StaggeredGrid, mu: f64, lambda: f64) -> Self {
        Self::new(
            &ScalarField::constant(grid, Location::Center, mu),
            &ScalarField::constant(grid, Location::Center, lambda),
        )
    }

    pub fn grid(&self) -> StaggeredGrid {
        self.grid
    }

    pub fn cell_mu(&self) -> &[f64] {
        &self.mu
    }

    fn cell_stress(&self, ux: &[f64], uy: &[f64], sxx: &mut [f64], syy: &mut [f64], exec: Exec) {
        let g = self.grid;
        let v = g.cell_volume();
        let (nx, wx) = (g.nx, g.nx + 1);
        exec.fill_rows(sxx, nx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                let k = j * nx + i;
                let dxx = (ux[j * wx + i + 1] - ux[j * wx + i]) / g.dx;
                let dyy = (uy[(j + 1) * nx + i] - uy[j * nx + i]) / g.dy;
                *o = v * (2.0 * self.mu[k] * dxx + self.lambda[k] * (dxx + dyy));
            }
        });
        exec.fill_rows(syy, nx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                let k = j * nx + i;
                let dxx = (ux[j * wx + i + 1] - ux[j * wx + i]) / g.dx;
                let dyy = (uy[(j + 1) * nx + i] - uy[j * nx + i]) / g.dy;
                *o = v * (2.0 * self.mu[k] * dyy + self.lambda[k] * (dxx + dyy));
            }
        });
    }

    fn node_shear(&self, ux: &[f64], uy: &[f64], tr: Option<&WallTraces>, out: &mut [f64], exec: Exec) {
        let g = self.grid;
        let (nx, ny, wx) = (g.nx, g.ny, g.nx + 1);
        exec.fill_rows(out, nx + 1, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                let dyux = if j == 0 {
                    2.0 * (ux[i] - tr.map_or(0.0, |t| t.bottom[i])) / g.dy
                } else if j == ny {
                    2.0 * (tr.map_or(0.0, |t| t.top[i]) - ux[(ny - 1) * wx + i]) / g.dy
                } else {
                    (ux[j * wx + i] - ux[(j - 1) * wx + i]) / g.dy
                };
                let dxuy = if i == 0 {
                    2.0 * (uy[j * nx] - tr.map_or(0.0, |t| t.left[j])) / g.dx
                } else if i == nx {
                    2.0 * (tr.map_or(0.0, |t| t.right[j]) - uy[j * nx + nx - 1]) / g.dx
                } else {
                    (uy[j * nx + i] - uy[j * nx + i - 1]) / g.dx
                };
                *o = 0.5 * (dyux + dxuy);
            }
        });
    }

    /// `K u` on interior faces (boundary normal faces get zero). Traces
    /// default to zero when `tr` is `None`.
    fn apply_slices(
        &self,
        ux: &[f64],
        uy: &[f64],
        tr: Option<&WallTraces>,
        out_x: &mut [f64],
        out_y: &mut [f64],
        exec: Exec,
    ) {
        let g = self.grid;
        let (nx, ny, wx) = (g.nx, g.ny, g.nx + 1);
        let mut sxx = vec![0.0; nx * ny];
        let mut syy = vec![0.0; nx * ny];
        let mut t = vec![0.0; wx * (ny + 1)];
        self.cell_stress(ux, uy, &mut sxx, &mut syy, exec);
        self.node_shear(ux, uy, tr, &mut t, exec);
        for (k, v) in t.iter_mut().enumerate() {
            *v *= self.node_coef[k];
        }
        exec.fill_rows(out_x, wx, |j, row| {
            let cb = if j == 0 { 2.0 / g.dy } else { 1.0 / g.dy };
            let ca = if j + 1 == ny { 2.0 / g.dy } else { 1.0 / g.dy };
            row[0] = 0.0;
            row[nx] = 0.0;
            for i in 1..nx {
                row[i] = (sxx[j * nx + i - 1] - sxx[j * nx + i]) / g.dx
                    + 0.5 * (t[j * wx + i] * cb - t[(j + 1) * wx + i] * ca);
            }
        });
        exec.fill_rows(out_y, nx, |j, row| {
            if j == 0 || j == ny {
                row.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            for (i, o) in row.iter_mut().enumerate() {
                let cl = if i == 0 { 2.0 / g.dx } else { 1.0 / g.dx };
                let cr = if i + 1 == nx { 2.0 / g.dx } else { 1.0 / g.dx };
                *o = (syy[(j - 1) * nx + i] - syy[j * nx + i]) / g.dy
                    + 0.5 * (t[j * wx + i] * cl - t[j * wx + i + 1] * cr);
            }
        });
    }

    /// `K u` (the gradient of `a(u, u) / 2`) on interior faces.
    pub fn apply(&self, u: &VectorField) -> VectorField {
        let mut out = VectorField::zeros(self.grid);
        self.apply_slices(&u.ux.data, &u.uy.data, Some(&u.traces), &mut out.ux.data, &mut out.uy.data, Exec::Serial);
        out
    }

    /// Bilinear form `a(u, v)` including wall traces.
    pub fn bilinear(&self, u: &VectorField, v: &VectorField) -> f64 {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut sxx = vec![0.0; nx * ny];
        let mut syy = vec![0.0; nx * ny];
        self.cell_stress(&u.ux.data, &u.uy.data, &mut sxx, &mut syy, Exec::Serial);
        let mut tu = vec![0.0; (nx + 1) * (ny + 1)];
        let mut tv = vec![0.0; (nx + 1) * (ny + 1)];
        self.node_shear(&u.ux.data, &u.uy.data, Some(&u.traces), &mut tu, Exec::Serial);
        self.node_shear(&v.ux.data, &v.uy.data, Some(&v.traces), &mut tv, Exec::Serial);
        let cells = Exec::Serial.sum(nx * ny, |k| {
            let (i, j) = (k % nx, k / nx);
            let dxx = (v.ux.at(i + 1, j) - v.ux.at(i, j)) / g.dx;
            let dyy = (v.uy.at(i, j + 1) - v.uy.at(i, j)) / g.dy;
            sxx[k] * dxx + syy[k] * dyy
        });
        let nodes = Exec::Serial.sum(tu.len(), |k| self.node_coef[k] * tu[k] * tv[k]);
        cells + nodes
    }

    /// Jacobi diagonal of `K` on the face layout (boundary faces get 1).
    fn diagonal(&self) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let (nx, ny, wx) = (g.nx, g.ny, g.nx + 1);
        let v = g.cell_volume();
        let mut dx_ = vec![1.0; wx * ny];
        let mut dy_ = vec![1.0; nx * (ny + 1)];
        let cell = |i: usize, j: usize| v * (2.0 * self.mu[j * nx + i] + self.lambda[j * nx + i]);
        for j in 0..ny {
            let cb = if j == 0 { 2.0 / g.dy } else { 1.0 / g.dy };
            let ca = if j + 1 == ny { 2.0 / g.dy } else { 1.0 / g.dy };
            for i in 1..nx {
                let nb = self.node_coef[j * wx + i] / 4.0;
                let na = self.node_coef[(j + 1) * wx + i] / 4.0;
                dx_[j * wx + i] = (cell(i - 1, j) + cell(i, j)) / (g.dx * g.dx) + nb * cb * cb + na * ca * ca;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let cl = if i == 0 { 2.0 / g.dx } else { 1.0 / g.dx };
                let cr = if i + 1 == nx { 2.0 / g.dx } else { 1.0 / g.dx };
                let nl = self.node_coef[j * wx + i] / 4.0;
                let nr = self.node_coef[j * wx + i + 1] / 4.0;
                dy_[j * nx + i] = (cell(i, j - 1) + cell(i, j)) / (g.dy * g.dy) + nl * cl * cl + nr * cr * cr;
            }
        }
        (dx_, dy_)
    }
}

/// Face densities: mean of the two adjacent cells (interior faces only).
pub fn face_density(rho: &ScalarField) -> (ScalarField, ScalarField) {
    let g = rho.grid;
    let mut fx = ScalarField::zeros(g, Location::XFace);
    let mut fy = ScalarField::zeros(g, Location::YFace);
    for j in 0..g.ny {
        for i in 1..g.nx {
            fx.set(i, j, 0.5 * (rho.at(i - 1, j) + rho.at(i, j)));
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            fy.set(i, j, 0.5 * (rho.at(i, j - 1) + rho.at(i, j)));
        }
    }
    (fx, fy)
}

/// Upwind mass flux densities on all faces; boundary faces take `rho_B`
/// on inflow and the adjacent cell on outflow.
fn mass_flux(rho: &ScalarField, u: &VectorField, bc: &BoundaryData) -> (ScalarField, ScalarField) {
    let g = rho.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut fx = ScalarField::zeros(g, Location::XFace);
    let mut fy = ScalarField::zeros(g, Location::YFace);
    for j in 0..ny {
        for i in 0..=nx {
            let s = u.ux.at(i, j);
            let up = if i == 0 {
                if s > 0.0 {
                    bc.rho_b[j]
                } else {
                    rho.at(0, j)
                }
            } else if i == nx {
                if s < 0.0 {
                    bc.rho_b[ny + j]
                } else {
                    rho.at(nx - 1, j)
                }
            } else if s > 0.0 {
                rho.at(i - 1, j)
            } else {
                rho.at(i, j)
            };
            fx.set(i, j, up * s);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let s = u.uy.at(i, j);
            let up = if j == 0 {
                if s > 0.0 {
                    bc.rho_b[2 * ny + i]
                } else {
                    rho.at(i, 0)
                }
            } else if j == ny {
                if s < 0.0 {
                    bc.rho_b[2 * ny + nx + i]
                } else {
                    rho.at(i, ny - 1)
                }
            } else if s > 0.0 {
                rho.at(i, j - 1)
            } else {
                rho.at(i, j)
            };
            fy.set(i, j, up * s);
        }
    }
    (fx, fy)
}

/// Upwind momentum convection `Div(rho u (x) u)` per unit volume on
/// interior faces.
pub fn convection(rho: &ScalarField, u: &VectorField, bc: &BoundaryData) -> VectorField {
    let g = rho.grid;
    let (nx, ny) = (g.nx, g.ny);
    let v = g.cell_volume();
    let (fx, fy) = mass_flux(rho, u, bc);
    let up = |f: f64, a: f64, b: f64| if f > 0.0 { f * a } else { f * b };
    let mut out = VectorField::zeros(g);
    let (ux, uy, tr) = (&u.ux, &u.uy, &u.traces);
    for j in 0..ny {
        for i in 1..nx {
            let fe = 0.5 * (fx.at(i, j) + fx.at(i + 1, j));
            let fw = 0.5 * (fx.at(i - 1, j) + fx.at(i, j));
            let fn_ = 0.5 * (fy.at(i - 1, j + 1) + fy.at(i, j + 1));
            let fs = 0.5 * (fy.at(i - 1, j) + fy.at(i, j));
            let above = if j + 1 < ny { ux.at(i, j + 1) } else { tr.top[i] };
            let below = if j > 0 { ux.at(i, j - 1) } else { tr.bottom[i] };
            let c = ux.at(i, j);
            let flux = (up(fe, c, ux.at(i + 1, j)) - up(fw, ux.at(i - 1, j), c)) * g.dy
                + (up(fn_, c, above) - up(fs, below, c)) * g.dx;
            out.ux.set(i, j, flux / v);
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let fn_ = 0.5 * (fy.at(i, j) + fy.at(i, j + 1));
            let fs = 0.5 * (fy.at(i, j - 1) + fy.at(i, j));
            let fe = 0.5 * (fx.at(i + 1, j - 1) + fx.at(i + 1, j));
            let fw = 0.5 * (fx.at(i, j - 1) + fx.at(i, j));
            let right = if i + 1 < nx { uy.at(i + 1, j) } else { tr.right[j] };
            let left = if i > 0 { uy.at(i - 1, j) } else { tr.left[j] };
            let c = uy.at(i, j);
            let flux = (up(fn_, c, uy.at(i, j + 1)) - up(fs, uy.at(i, j - 1), c)) * g.dx
                + (up(fe, c, right) - up(fw, left, c)) * g.dy;
            out.uy.set(i, j, flux / v);
        }
    }
    out
}

/// `eps (grad rho . grad) u` on interior faces.
pub fn eps_coupling(rho: &ScalarField, u: &VectorField, eps: f64) -> VectorField {
    let g = rho.grid;
    let (nx, ny) = (g.nx, g.ny);
    let gy_c = |i: usize, j: usize| (rho.at(i, (j + 1).min(ny - 1)) - rho.at(i, j.saturating_sub(1))) / (2.0 * g.dy);
    let gx_c = |i: usize, j: usize| (rho.at((i + 1).min(nx - 1), j) - rho.at(i.saturating_sub(1), j)) / (2.0 * g.dx);
    let (ux, uy, tr) = (&u.ux, &u.uy, &u.traces);
    let mut out = VectorField::zeros(g);
    for j in 0..ny {
        for i in 1..nx {
            let drx = (rho.at(i, j) - rho.at(i - 1, j)) / g.dx;
            let dry = 0.5 * (gy_c(i - 1, j) + gy_c(i, j));
            let dux = (ux.at(i + 1, j) - ux.at(i - 1, j)) / (2.0 * g.dx);
            let below = if j > 0 { ux.at(i, j - 1) } else { 2.0 * tr.bottom[i] - ux.at(i, 0) };
            let above = if j + 1 < ny { ux.at(i, j + 1) } else { 2.0 * tr.top[i] - ux.at(i, ny - 1) };
            let duy = (above - below) / (2.0 * g.dy);
            out.ux.set(i, j, eps * (drx * dux + dry * duy));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let dry = (rho.at(i, j) - rho.at(i, j - 1)) / g.dy;
            let drx = 0.5 * (gx_c(i, j - 1) + gx_c(i, j));
            let duy = (uy.at(i, j + 1) - uy.at(i, j - 1)) / (2.0 * g.dy);
            let left = if i > 0 { uy.at(i - 1, j) } else { 2.0 * tr.left[j] - uy.at(0, j) };
            let right = if i + 1 < nx { uy.at(i + 1, j) } else { 2.0 * tr.right[j] - uy.at(nx - 1, j) };
            let dux = (right - left) / (2.0 * g.dx);
            out.uy.set(i, j, eps * (drx * dux + dry * duy));
        }
    }
    out
}

/// Face gradient of `p_delta(rho)` on interior faces.
pub fn pressure_gradient(rho: &ScalarField, law: &PressureLaw) -> VectorField {
    let p = rho.map(|r| law.p_delta(r));
    crate::fields::face_gradient(&p)
}

/// Faces held fixed during a momentum solve (in addition to the walls).
#[derive(Debug, Clone)]
pub struct PinnedFaces {
    pub ux: Vec<bool>,
    pub uy: Vec<bool>,
    /// Values imposed on the pinned faces.
    pub value: VectorField,
}

#[derive(Debug, Clone, Default)]
pub struct MomentumOptions<'a> {
    /// Body force density added to the right-hand side.
    pub source: Option<&'a VectorField>,
    pub pinned: Option<&'a PinnedFaces>,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub struct MomentumStep {
    pub u: VectorField,
    pub solve: SolveStats,
    /// Faces fixed to `u_inf` because the new density fell below the vacuum floor.
    pub vacuum_faces: usize,
}

/// Density floor below which a face is treated as vacuum.
pub const VACUUM_FLOOR: f64 = 1e-10;

/// Relative residual of the implicit viscous solve.
pub const MOMENTUM_TOL: f64 = 1e-10;

/// `(V rho'_f / dt + K) u' = V rho_f u / dt - V (conv + grad p(rho') + eps grad rho' . grad u) + V f`
/// with `u' = u_B` on the walls.
#[allow(clippy::too_many_arguments)]
pub fn momentum_step(
    rho: &ScalarField,
    rho_new: &ScalarField,
    u: &VectorField,
    visc: &ViscousOperator,
    params: &PenaltyParams,
    dt: f64,
    bc: &BoundaryData,
    opts: &MomentumOptions,
) -> Result<MomentumStep> {
    let g = rho.grid;
    check_cfl(u, dt)?;
    let v = g.cell_volume();
    let law = PressureLaw::from_params(params);
    let conv = convection(rho, u, bc);
    let gradp = pressure_gradient(rho_new, &law);
    let coupling = eps_coupling(rho_new, u, params.eps);
    let (r0x, r0y) = face_density(rho);
    let (r1x, r1y) = face_density(rho_new);

    let nxf = g.len(Location::XFace);
    let wx = g.nx + 1;
    let mut active_x = vec![false; nxf];
    let mut active_y = vec![false; g.len(Location::YFace)];
    for j in 0..g.ny {
        for i in 1..g.nx {
            active_x[j * wx + i] = true;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            active_y[j * g.nx + i] = true;
        }
    }
    let mut fixed = bc.u_b.clone();
    if let Some(p) = opts.pinned {
        for k in 0..nxf {
            if p.ux[k] && active_x[k] {
                active_x[k] = false;
                fixed.ux.data[k] = p.value.ux.data[k];
            }
        }
        for k in 0..active_y.len() {
            if p.uy[k] && active_y[k] {
                active_y[k] = false;
                fixed.uy.data[k] = p.value.uy.data[k];
            }
        }
    }
    let mut vacuum_faces = 0;
    for (active, r0, r1, uu, fixv, inf) in [
        (&mut active_x, &r0x, &r1x, &u.ux, &mut fixed.ux, &bc.u_inf.ux),
        (&mut active_y, &r0y, &r1y, &u.uy, &mut fixed.uy, &bc.u_inf.uy),
    ] {
        for k in 0..active.len() {
            if active[k] && r1.data[k] < VACUUM_FLOOR {
                let m = r0.data[k] * uu.data[k];
                if m.abs() > VACUUM_FLOOR {
                    return Err(SimError::VacuumCell { index: k, density: r1.data[k], momentum: m });
                }
                active[k] = false;
                fixv.data[k] = inf.data[k];
                vacuum_faces += 1;
            }
        }
    }

    let kb = visc.apply(&fixed);
    let mut rhs = vec![0.0; nxf + active_y.len()];
    let mut mass = vec![0.0; rhs.len()];
    for (off, active, r0, r1, uu, c, gp, e, kbf, src) in [
        (0, &active_x, &r0x, &r1x, &u.ux, &conv.ux, &gradp.ux, &coupling.ux, &kb.ux, opts.source.map(|s| &s.ux)),
        (nxf, &active_y, &r0y, &r1y, &u.uy, &conv.uy, &gradp.uy, &coupling.uy, &kb.uy, opts.source.map(|s| &s.uy)),
    ] {
        for k in 0..active.len() {
            if !active[k] {
                continue;
            }
            mass[off + k] = v * r1.data[k] / dt;
            let f = src.map_or(0.0, |s| s.data[k]);
            rhs[off + k] =
                v * r0.data[k] * uu.data[k] / dt - v * (c.data[k] + gp.data[k] + e.data[k] - f) - kbf.data[k];
        }
    }
    let (kdx, kdy) = visc.diagonal();
    let mut diag = vec![1.0; rhs.len()];
    for k in 0..nxf {
        if active_x[k] {
            diag[k] = mass[k] + kdx[k];
        }
    }
    for k in 0..active_y.len() {
        if active_y[k] {
            diag[nxf + k] = mass[nxf + k] + kdy[k];
        }
    }
    let exec = opts.exec;
    let active: Vec<bool> = active_x.iter().chain(active_y.iter()).copied().collect();
    let apply = |p: &[f64], out: &mut [f64]| {
        let mut q = p.to_vec();
        for (k, a) in active.iter().enumerate() {
            if !a {
                q[k] = 0.0;
            }
        }
        let (qx, qy) = q.split_at(nxf);
        let (ox, oy) = out.split_at_mut(nxf);
        visc.apply_slices(qx, qy, None, ox, oy, exec);
        for k in 0..active.len() {
            out[k] = if active[k] { out[k] + mass[k] * p[k] } else { p[k] };
        }
    };
    let mut x: Vec<f64> = u.ux.data.iter().chain(u.uy.data.iter()).copied().collect();
    for k in 0..x.len() {
        if !active[k] {
            x[k] = 0.0;
        }
    }
    let settings = CgSettings { tol: MOMENTUM_TOL, max_iter: 10 * g.nx * g.ny, exec };
    let solve = pcg(apply, &diag, &rhs, &mut x, settings)?;
    let mut out = fixed;
    for k in 0..nxf {
        if active_x[k] {
            out.ux.data[k] = x[k];
        }
    }
    for k in 0..active_y.len() {
        if active_y[k] {
            out.uy.data[k] = x[nxf + k];
        }
    }
    if !out.is_finite() {
        return Err(SimError::LinearSolveDiverged { residual: f64::NAN, iterations: solve.iterations });
    }
    Ok(MomentumStep { u: out, solve, vacuum_faces })
}

/// Semi-discrete momentum rate `d(rho u)/dt` of the scheme on interior faces.
pub fn momentum_rate(
    rho: &ScalarField,
    u: &VectorField,
    visc: &ViscousOperator,
    params: &PenaltyParams,
    bc: &BoundaryData,
) -> VectorField {
    let v = rho.grid.cell_volume();
    let law = PressureLaw::from_params(params);
    let conv = convection(rho, u, bc);
    let gradp = pressure_gradient(rho, &law);
    let coupling = eps_coupling(rho, u, params.eps);
    let k = visc.apply(u);
    let mut out = VectorField::zeros(rho.grid);
    for (o, c, g, e, kk) in [
        (&mut out.ux, &conv.ux, &gradp.ux, &coupling.ux, &k.ux),
        (&mut out.uy, &conv.uy, &gradp.uy, &coupling.uy, &k.uy),
    ] {
        for idx in 0..o.data.len() {
            o.data[idx] = -(c.data[idx] + g.data[idx] + e.data[idx]) - kk.data[idx] / v;
        }
    }
    // boundary normal faces are prescribed
    let g = rho.grid;
    for j in 0..g.ny {
        out.ux.set(0, j, 0.0);
        out.ux.set(g.nx, j, 0.0);
    }
    for i in 0..g.nx {
        out.uy.set(i, 0, 0.0);
        out.uy.set(i, g.ny, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, Wall};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn grid(n: usize) -> StaggeredGrid {
        StaggeredGrid::new(n, n, 1.0, 1.0).unwrap()
    }

    fn walls(n: usize, f: impl Fn(Wall, [f64; 2]) -> [f64; 2]) -> BoundaryData {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 };
        BoundaryData::new(&d, grid(n), f, |_, _| 1.0).unwrap()
    }

    fn random_field(g: StaggeredGrid, rng: &mut impl Rng, traces: bool) -> VectorField {
        let mut u = VectorField::zeros(g);
        u.ux.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        u.uy.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        if traces {
            for t in [&mut u.traces.bottom, &mut u.traces.top, &mut u.traces.left, &mut u.traces.right] {
                t.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
            }
        }
        u
    }

    fn random_viscosity(g: StaggeredGrid, rng: &mut impl Rng) -> ViscousOperator {
        let mut mu = ScalarField::zeros(g, Location::Center);
        let mut la = ScalarField::zeros(g, Location::Center);
        for k in 0..mu.data.len() {
            mu.data[k] = rng.gen_range(0.05..50.0);
            la.data[k] = rng.gen_range(-mu.data[k]..50.0);
        }
        ViscousOperator::new(&mu, &la)
    }

    #[test]
    fn ramp_examples() {
        assert_eq!(ramp_h(-1.0), 0.0);
        assert_eq!(ramp_h(0.0), 0.0);
        assert_eq!(ramp_h(2.0), 4.0);
    }

    #[test]
    fn viscosity_examples() {
        let p = PenaltyParams { n: 1e3, ..Default::default() };
        let m = ViscosityModel::from_params(&p);
        assert_eq!(p.mu + m.increment(-0.5, 0.4), p.mu);
        let inc = m.increment(0.1 - p.r, 0.4);
        assert!((inc - 10.0).abs() < 1e-9);
        assert_eq!(m.increment(0.2, 0.04), 0.0);
        let g = grid(32);
        let chi = ScalarField::from_fn(g, Location::Center, |x| 0.3 - (x[0] - 0.5).hypot(x[1] - 0.5));
        let (mu, la) = viscosity_fields(&chi, &m);
        assert!(mu.min() >= p.mu);
        assert!(mu.data.iter().zip(&la.data).all(|(a, b)| a + b >= 0.0));
    }

    #[test]
    fn pressure_examples() {
        let p = PenaltyParams { a: 1.0, gamma: 2.0, delta: 0.0, ..Default::default() };
        assert_eq!(pressure_p(0.0, &p).unwrap(), 0.0);
        assert_eq!(pressure_P(0.0, &p).unwrap(), 0.0);
        assert!((pressure_p(2.0, &p).unwrap() - 4.0).abs() < 1e-14);
        assert!((pressure_P(2.0, &p).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(pressure_p(-1.0, &p), Err(SimError::NegativeDensity(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn convexity_slack_is_nonnegative(rho in 0.0..5.0f64, rb in 0.0..5.0f64) {
            let law = PressureLaw::from_params(&PenaltyParams::default());
            let s = law.convexity_slack(rho, rb);
            prop_assert!(s >= -1e-12 * (1.0 + law.potential_delta(rb.max(rho))));
        }
    }

    #[test]
    fn stress_examples() {
        let g = grid(12);
        let mu = ScalarField::constant(g, Location::Center, 0.3);
        let la = ScalarField::constant(g, Location::Center, 0.2);
        let s = stress(&VectorField::from_fn(g, |x| [x[0], x[1]]), &mu, &la);
        assert!(s.xx.data.iter().all(|v| (v - (0.6 + 0.4)).abs() < 1e-12));
        assert!(s.xy.max_abs() < 1e-12);
        let s = stress(&VectorField::from_fn(g, |x| [x[1], 0.0]), &mu, &la);
        assert!(s.xy.data.iter().all(|v| (v - 0.3).abs() < 1e-12));
        let rigid = VectorField::from_fn(g, |x| [0.2 - 1.3 * (x[1] - 0.5), -0.1 + 1.3 * (x[0] - 0.5)]);
        assert!(stress(&rigid, &mu, &la).max_abs() < 1e-12);
    }

    #[test]
    fn viscous_form_is_symmetric_and_nonnegative() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let g = grid(10);
        for _ in 0..100 {
            let k = random_viscosity(g, &mut rng);
            let u = random_field(g, &mut rng, true);
            let w = random_field(g, &mut rng, true);
            assert!(k.bilinear(&u, &u) >= 0.0);
            let (a, b) = (k.bilinear(&u, &w), k.bilinear(&w, &u));
            assert!((a - b).abs() <= 1e-10 * (a.abs() + 1.0));
        }
    }

    #[test]
    fn operator_is_the_gradient_of_the_form() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let g = grid(9);
        let k = random_viscosity(g, &mut rng);
        let u = random_field(g, &mut rng, true);
        let mut w = random_field(g, &mut rng, false);
        for j in 0..g.ny {
            w.ux.set(0, j, 0.0);
            w.ux.set(g.nx, j, 0.0);
        }
        for i in 0..g.nx {
            w.uy.set(i, 0, 0.0);
            w.uy.set(i, g.ny, 0.0);
        }
        let ku = k.apply(&u);
        let dot: f64 = ku.ux.data.iter().zip(&w.ux.data).map(|(a, b)| a * b).sum::<f64>()
            + ku.uy.data.iter().zip(&w.uy.data).map(|(a, b)| a * b).sum::<f64>();
        let form = k.bilinear(&u, &w);
        assert!((dot - form).abs() < 1e-9 * (form.abs() + 1.0), "{dot} {form}");
        // the Jacobi diagonal matches unit probes
        let (dx, _) = k.diagonal();
        let mut e = VectorField::zeros(g);
        e.ux.set(3, 4, 1.0);
        assert!((k.apply(&e).ux.at(3, 4) - dx[4 * (g.nx + 1) + 3]).abs() < 1e-9);
    }

    #[test]
    fn rigid_fields_are_in_the_kernel() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let g = grid(16);
        let k = random_viscosity(g, &mut rng);
        let rigid = VectorField::from_fn(g, |x| [0.4 - 0.7 * (x[1] - 0.3), 0.1 + 0.7 * (x[0] - 0.6)]);
        assert!(k.apply(&rigid).max_abs() < 1e-9);
    }

    #[test]
    fn static_state_stays_at_rest() {
        let bc = walls(24, |_, _| [0.0, 0.0]);
        let g = bc.grid();
        let p = PenaltyParams::default();
        let rho = ScalarField::constant(g, Location::Center, 1.3);
        let chi = ScalarField::from_fn(g, Location::Center, |x| 0.12 - (x[0] - 0.5).hypot(x[1] - 0.5));
        let (mu, la) = viscosity_fields(&chi, &ViscosityModel::from_params(&p));
        let k = ViscousOperator::new(&mu, &la);
        let s =
            momentum_step(&rho, &rho, &VectorField::zeros(g), &k, &p, 1e-3, &bc, &MomentumOptions::default()).unwrap();
        assert_eq!(s.u.max_abs(), 0.0);
    }

    #[test]
    fn uniform_translation_is_steady() {
        let c = [0.15, -0.05];
        let bc = walls(24, move |_, _| c);
        let g = bc.grid();
        let p = PenaltyParams { n: 0.0, ..Default::default() };
        let rho = ScalarField::constant(g, Location::Center, 1.0);
        let k = ViscousOperator::uniform(g, p.mu, p.lambda);
        let u = VectorField::from_fn(g, |_| c);
        let s = momentum_step(&rho, &rho, &u, &k, &p, 5e-3, &bc, &MomentumOptions::default()).unwrap();
        let err = s.u.sub(&u).max_abs();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn stiff_penalty_still_converges() {
        let bc = walls(32, |w, _| match w {
            Wall::Left | Wall::Right => [0.2, 0.0],
            _ => [0.0, 0.0],
        });
        let g = bc.grid();
        let rho = ScalarField::constant(g, Location::Center, 1.0);
        let chi = ScalarField::from_fn(g, Location::Center, |x| 0.12 - (x[0] - 0.5).hypot(x[1] - 0.5));
        let mut iters = Vec::new();
        for n in [1e3, 1e4] {
            let p = PenaltyParams { n, ..Default::default() };
            let (mu, la) = viscosity_fields(&chi, &ViscosityModel::from_params(&p));
            let k = ViscousOperator::new(&mu, &la);
            let s = momentum_step(&rho, &rho, &bc.u_inf, &k, &p, 2e-3, &bc, &MomentumOptions::default()).unwrap();
            assert!(s.solve.residual <= MOMENTUM_TOL);
            iters.push(s.solve.iterations);
        }
        assert!(iters[1] >= iters[0] / 2);
    }

    #[test]
    fn serial_and_parallel_steps_agree() {
        let bc = walls(20, |w, _| match w {
            Wall::Left | Wall::Right => [0.2, 0.0],
            _ => [0.0, 0.0],
        });
        let g = bc.grid();
        let p = PenaltyParams::default();
        let rho = ScalarField::from_fn(g, Location::Center, |x| 1.0 + 0.1 * x[0]);
        let k = ViscousOperator::uniform(g, p.mu, p.lambda);
        let a = momentum_step(&rho, &rho, &bc.u_inf, &k, &p, 2e-3, &bc, &MomentumOptions::default()).unwrap();
        let opts = MomentumOptions { exec: Exec::Parallel, ..Default::default() };
        let b = momentum_step(&rho, &rho, &bc.u_inf, &k, &p, 2e-3, &bc, &opts).unwrap();
        assert_eq!(a.u, b.u);
    }
}
