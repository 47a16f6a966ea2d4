//! Monitored quantities: energy ledger, rigidity, effective viscous flux,
//! interior pressure norms and the stress on a probe ring around the body.

use serde::Serialize;

use crate::body::BodyState;
use crate::continuity::{continuity_rate, PenaltyParams};
use crate::error::{Result, SimError};
use crate::exec::Exec;
use crate::fields::{divergence, sym_gradient_norm_sq, Location, Point, ScalarField, VectorField};
use crate::geometry::{BoundaryData, Wall};
use crate::momentum::{face_density, momentum_rate, stress, PressureLaw, ViscousOperator};

/// `sum over interior faces 1/2 V rho_f |u - u_inf|^2 + sum over cells V P_delta(rho)`.
pub fn energy_total(rho: &ScalarField, u: &VectorField, u_inf: &VectorField, params: &PenaltyParams) -> f64 {
    let law = PressureLaw::from_params(params);
    let g = rho.grid;
    let v = g.cell_volume();
    let (rx, ry) = face_density(rho);
    let wx = g.nx + 1;
    let kin_x = Exec::Serial.sum(rx.data.len(), |k| {
        let i = k % wx;
        if i == 0 || i == g.nx {
            return 0.0;
        }
        0.5 * v * rx.data[k] * (u.ux.data[k] - u_inf.ux.data[k]).powi(2)
    });
    let kin_y = Exec::Serial.sum(ry.data.len(), |k| {
        let j = k / g.nx;
        if j == 0 || j == g.ny {
            return 0.0;
        }
        0.5 * v * ry.data[k] * (u.uy.data[k] - u_inf.uy.data[k]).powi(2)
    });
    let pot = Exec::Serial.sum(rho.data.len(), |k| v * law.potential_delta(rho.data[k]));
    kin_x + kin_y + pot
}

/// Instantaneous energy terms of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateTerms {
    pub energy: f64,
    /// Semi-discrete `dE/dt` of the scheme.
    pub power: f64,
    /// `a(u - u_inf, u - u_inf)`.
    pub dissipation: f64,
    /// `eps int P_delta''(rho) |grad rho|^2`.
    pub eps_term: f64,
    /// `int_{out} P_delta(rho) u_B . n`.
    pub outflow_term: f64,
    /// `-int_{in} P_delta(rho_B) u_B . n`.
    pub inflow_term: f64,
    /// `int p_delta(rho) Div u_inf`.
    pub pressure_dilation: f64,
    /// Smallest convexity slack over inflow faces, zero without inflow.
    pub convexity_slack_min: f64,
}

pub fn state_terms(
    rho: &ScalarField,
    u: &VectorField,
    visc: &ViscousOperator,
    params: &PenaltyParams,
    bc: &BoundaryData,
) -> StateTerms {
    let g = rho.grid;
    let v = g.cell_volume();
    let law = PressureLaw::from_params(params);
    let w = u.sub(&bc.u_inf);
    let m_rate = momentum_rate(rho, u, visc, params, bc);
    let r_rate = continuity_rate(rho, u, params, bc);
    let (fr_x, fr_y) = face_density(&r_rate);
    let wx = g.nx + 1;
    let kin_x = Exec::Serial.sum(u.ux.data.len(), |k| {
        let i = k % wx;
        if i == 0 || i == g.nx {
            return 0.0;
        }
        let (wk, uk, rf) = (w.ux.data[k], u.ux.data[k], fr_x.data[k]);
        v * (wk * (m_rate.ux.data[k] - uk * rf) + 0.5 * wk * wk * rf)
    });
    let kin_y = Exec::Serial.sum(u.uy.data.len(), |k| {
        let j = k / g.nx;
        if j == 0 || j == g.ny {
            return 0.0;
        }
        let (wk, uk, rf) = (w.uy.data[k], u.uy.data[k], fr_y.data[k]);
        v * (wk * (m_rate.uy.data[k] - uk * rf) + 0.5 * wk * wk * rf)
    });
    let pot = Exec::Serial.sum(rho.data.len(), |k| v * law.potential_slope(rho.data[k]) * r_rate.data[k]);

    let slope = rho.map(|r| law.potential_slope(r));
    let mut eps_term = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if i + 1 < g.nx {
                eps_term += g.dy / g.dx * (slope.at(i + 1, j) - slope.at(i, j)) * (rho.at(i + 1, j) - rho.at(i, j));
            }
            if j + 1 < g.ny {
                eps_term += g.dx / g.dy * (slope.at(i, j + 1) - slope.at(i, j)) * (rho.at(i, j + 1) - rho.at(i, j));
            }
        }
    }
    eps_term *= params.eps;

    let mut outflow_term = 0.0;
    let mut inflow_term = 0.0;
    let mut slack = f64::INFINITY;
    for (k, f) in bc.faces.iter().enumerate() {
        let cell = rho.at(f.cell.0, f.cell.1);
        if bc.out_mask[k] {
            outflow_term += f.area * law.potential_delta(cell) * bc.q[k];
        } else {
            inflow_term -= f.area * law.potential_delta(bc.rho_b[k]) * bc.q[k];
            slack = slack.min(law.convexity_slack(cell, bc.rho_b[k]));
        }
    }
    let div_inf = divergence(&bc.u_inf);
    let pressure_dilation = Exec::Serial.sum(rho.data.len(), |k| v * law.p_delta(rho.data[k]) * div_inf.data[k]);

    StateTerms {
        energy: energy_total(rho, u, &bc.u_inf, params),
        power: kin_x + kin_y + pot,
        dissipation: visc.bilinear(&w, &w),
        eps_term,
        outflow_term,
        inflow_term,
        pressure_dilation,
        convexity_slack_min: if slack.is_finite() { slack } else { 0.0 },
    }
}

/// One ledger row: the state terms at the new time plus the integrated balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    #[serde(flatten)]
    pub terms: StateTerms,
    /// Trapezoidal integral of the power since the start.
    pub work: f64,
    /// `E(t) - E(0) - work`.
    pub residual: f64,
}

/// Running energy balance `E(t) - E(0) - int_0^t dE/dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub initial_energy: f64,
    pub work: f64,
    pub last: StateTerms,
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new(initial: StateTerms) -> Self {
        Self { initial_energy: initial.energy, work: 0.0, last: initial, rows: Vec::new() }
    }

    /// Residual with the largest magnitude so far.
    pub fn worst_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a })
    }
}

/// Appends the step from `ledger.last` to `new` with time step `dt`.
pub fn ledger_step(ledger: &mut EnergyLedger, new: StateTerms, t: f64, dt: f64) -> LedgerRow {
    ledger.work += 0.5 * dt * (ledger.last.power + new.power);
    ledger.last = new;
    let row =
        LedgerRow { t, terms: new, work: ledger.work, residual: new.energy - ledger.initial_energy - ledger.work };
    ledger.rows.push(row);
    row
}

/// `int_{K^S} |D(u)|^2` with `K^S = {chi >= chi_margin}`.
pub fn rigidity_measure(u: &VectorField, chi: &ScalarField, chi_margin: f64) -> f64 {
    let mask: Vec<bool> = chi.data.iter().map(|&c| c >= chi_margin).collect();
    crate::fields::integrate(&sym_gradient_norm_sq(u), Some(&mask))
}

/// `p_delta(rho) - (lambda + 2 mu) Div u` at cell centers.
pub fn effective_viscous_flux(rho: &ScalarField, u: &VectorField, params: &PenaltyParams) -> ScalarField {
    let law = PressureLaw::from_params(params);
    let div = divergence(u);
    let c = params.lambda + 2.0 * params.mu;
    rho.zip_map(&div, |r, d| law.p_delta(r) - c * d)
}

/// Fluid mask `K^f`: cells farther than `margin` outside the solid and at
/// least `h` from the walls.
pub fn fluid_mask(chi: &ScalarField, r: f64, margin: f64, h: f64) -> Vec<bool> {
    let g = chi.grid;
    (0..chi.data.len()).map(|k| chi.data[k] < -(r + margin) && g.wall_distance(chi.position(k)) >= h).collect()
}

/// `(||rho||_{gamma+1}, ||rho||_{beta+1})` over the masked cells.
pub fn interior_pressure_norm(rho: &ScalarField, mask: &[bool], params: &PenaltyParams) -> (f64, f64) {
    let v = rho.grid.cell_volume();
    let norm = |p: f64| {
        let s = Exec::Serial.sum(rho.data.len(), |k| if mask[k] { v * rho.data[k].abs().powf(p) } else { 0.0 });
        s.powf(1.0 / p)
    };
    (norm(params.gamma + 1.0), norm(params.beta + 1.0))
}

/// Closed probe curve around the solid at distance `offset` outside `S(t)`,
/// counterclockwise.
pub fn probe_ring(body: &BodyState, offset: f64) -> Vec<Point> {
    let pts = body.boundary_markers();
    let n = pts.len();
    let shift = body.r + offset;
    if let crate::geometry::Shape::Disc { center, radius } = body.eroded_now() {
        return pts
            .iter()
            .map(|p| {
                let d = unit([p[0] - center[0], p[1] - center[1]]);
                [center[0] + (radius + shift) * d[0], center[1] + (radius + shift) * d[1]]
            })
            .collect();
    }
    (0..n)
        .map(|k| {
            let (a, p, b) = (pts[(k + n - 1) % n], pts[k], pts[(k + 1) % n]);
            let e1 = unit([p[1] - a[1], a[0] - p[0]]);
            let e2 = unit([b[1] - p[1], p[0] - b[0]]);
            let nrm = unit([e1[0] + e2[0], e1[1] + e2[1]]);
            let c = (nrm[0] * e1[0] + nrm[1] * e1[1]).max(0.5);
            [p[0] + shift / c * nrm[0], p[1] + shift / c * nrm[1]]
        })
        .collect()
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let l = v[0].hypot(v[1]);
    [v[0] / l, v[1] / l]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceLoad {
    pub force: [f64; 2],
    pub torque: f64,
}

/// `int (S(u) - p_delta Id) n` over the probe ring, with the torque about the
/// body center.
pub fn surface_force_torque(
    rho: &ScalarField,
    u: &VectorField,
    body: &BodyState,
    params: &PenaltyParams,
    offset: f64,
) -> Result<SurfaceLoad> {
    let g = rho.grid;
    let ring = probe_ring(body, offset);
    let reach = 2.0 * g.dx.max(g.dy);
    if ring.iter().any(|p| g.wall_distance(*p) < reach) {
        return Err(SimError::ProbeOutside);
    }
    let mu = ScalarField::constant(g, Location::Center, params.mu);
    let la = ScalarField::constant(g, Location::Center, params.lambda);
    let s = stress(u, &mu, &la);
    let law = PressureLaw::from_params(params);
    let p = rho.map(|r| law.p_delta(r));
    let (mut f, mut tq) = ([0.0, 0.0], 0.0);
    let n = ring.len();
    for k in 0..n {
        let (a, b) = (ring[k], ring[(k + 1) % n]);
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let nl = [b[1] - a[1], a[0] - b[0]];
        let t = s.sample(m);
        let pm = p.sample(m);
        let tr = [(t[0][0] - pm) * nl[0] + t[0][1] * nl[1], t[1][0] * nl[0] + (t[1][1] - pm) * nl[1]];
        f[0] += tr[0];
        f[1] += tr[1];
        tq += (m[0] - body.x[0]) * tr[1] - (m[1] - body.x[1]) * tr[0];
    }
    Ok(SurfaceLoad { force: f, torque: tq })
}

/// Signed wall flux `int_wall rho u . n` of a boundary flux vector, for reports.
pub fn wall_fluxes(bc: &BoundaryData, boundary_flux: &[f64]) -> [(Wall, f64); 4] {
    let mut out = Wall::ALL.map(|w| (w, 0.0));
    for (f, q) in bc.faces.iter().zip(boundary_flux) {
        let slot = Wall::ALL.iter().position(|w| *w == f.wall).expect("known wall");
        out[slot].1 += f.area * q;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuity::continuity_step;
    use crate::fields::StaggeredGrid;
    use crate::geometry::{DomainSpec, Shape};
    use crate::momentum::{viscosity_fields, ViscosityModel};
    use proptest::prelude::*;

    fn bc(n: usize, u_b: impl Fn(Wall, Point) -> [f64; 2]) -> BoundaryData {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 };
        BoundaryData::new(&d, StaggeredGrid::new(n, n, 1.0, 1.0).unwrap(), u_b, |_, _| 1.0).unwrap()
    }

    fn inflow(w: Wall, p: Point) -> [f64; 2] {
        match w {
            Wall::Left | Wall::Right => [0.2 * 6.0 * p[1] * (1.0 - p[1]), 0.0],
            _ => [0.0, 0.0],
        }
    }

    fn body() -> BodyState {
        BodyState::new(Shape::Disc { center: [0.5, 0.5], radius: 0.15 }, 0.03, 1.0, 128, 0.03).unwrap()
    }

    #[test]
    fn energy_examples() {
        let b = bc(16, |_, _| [0.0, 0.0]);
        let g = b.grid();
        let p = PenaltyParams { a: 1.0, gamma: 2.0, delta: 0.0, ..Default::default() };
        let zero = ScalarField::zeros(g, Location::Center);
        assert_eq!(energy_total(&zero, &b.u_inf, &b.u_inf, &p), 0.0);
        let one = ScalarField::constant(g, Location::Center, 1.0);
        assert!((energy_total(&one, &b.u_inf, &b.u_inf, &p) - 1.0).abs() < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn energy_is_nonnegative(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let b = bc(12, inflow);
            let g = b.grid();
            let mut rho = ScalarField::zeros(g, Location::Center);
            rho.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..3.0));
            let mut u = VectorField::zeros(g);
            u.ux.data.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            u.uy.data.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            prop_assert!(energy_total(&rho, &u, &b.u_inf, &PenaltyParams::default()) >= 0.0);
        }
    }

    #[test]
    fn power_is_the_derivative_of_the_energy() {
        let b = bc(24, inflow);
        let g = b.grid();
        let p = PenaltyParams { n: 1e2, ..Default::default() };
        let rho = ScalarField::from_fn(g, Location::Center, |x| 1.0 + 0.2 * (3.0 * x[0]).sin() * x[1]);
        let mut u = VectorField::from_fn(g, |x| {
            [0.2 * 6.0 * x[1] * (1.0 - x[1]), 0.05 * (4.0 * x[0]).sin() * x[1] * (1.0 - x[1])]
        });
        b.apply_dirichlet(&mut u);
        let chi = crate::body::chi_field(&body(), &g).unwrap();
        let (mu, la) = viscosity_fields(&chi, &ViscosityModel::from_params(&p));
        let k = ViscousOperator::new(&mu, &la);
        let terms = state_terms(&rho, &u, &k, &p, &b);
        let m_rate = momentum_rate(&rho, &u, &k, &p, &b);
        let r_rate = continuity_rate(&rho, &u, &p, &b);
        // move along the semi-discrete rates and difference the energy
        let energy_at = |s: f64| {
            let r = rho.zip_map(&r_rate, |a, d| a + s * d);
            let (r0x, r0y) = face_density(&rho);
            let (r1x, r1y) = face_density(&r);
            let mut v = u.clone();
            for k in 0..v.ux.data.len() {
                if r1x.data[k] > 0.0 {
                    v.ux.data[k] = (r0x.data[k] * u.ux.data[k] + s * m_rate.ux.data[k]) / r1x.data[k];
                }
            }
            for k in 0..v.uy.data.len() {
                if r1y.data[k] > 0.0 {
                    v.uy.data[k] = (r0y.data[k] * u.uy.data[k] + s * m_rate.uy.data[k]) / r1y.data[k];
                }
            }
            energy_total(&r, &v, &b.u_inf, &p)
        };
        let h = 1e-6;
        let fd = (energy_at(h) - energy_at(-h)) / (2.0 * h);
        assert!((fd - terms.power).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} {}", terms.power);
    }

    #[test]
    fn static_state_has_a_silent_ledger() {
        let b = bc(16, |_, _| [0.0, 0.0]);
        let g = b.grid();
        let p = PenaltyParams::default();
        let rho = ScalarField::constant(g, Location::Center, 1.0);
        let k = ViscousOperator::uniform(g, p.mu, p.lambda);
        let t = state_terms(&rho, &b.u_inf, &k, &p, &b);
        assert_eq!(t.power, 0.0);
        assert_eq!(t.dissipation, 0.0);
        assert_eq!(t.eps_term, 0.0);
        assert_eq!(t.outflow_term, 0.0);
        assert_eq!(t.convexity_slack_min, 0.0);
        let mut l = EnergyLedger::new(t);
        let row = ledger_step(&mut l, t, 0.01, 0.01);
        assert_eq!(row.residual, 0.0);
    }

    #[test]
    fn pure_diffusion_dissipates_through_the_eps_term() {
        let b = bc(12, |_, _| [0.0, 0.0]);
        let g = b.grid();
        let p = PenaltyParams { eps: 1e-2, delta: 1e-2, ..Default::default() };
        let k = ViscousOperator::uniform(g, p.mu, p.lambda);
        // three plateaus in x
        let levels = [1.0, 1.5, 0.8];
        let mut rho = ScalarField::from_fn(g, Location::Center, |x| levels[((3.0 * x[0]) as usize).min(2)]);
        let terms = state_terms(&rho, &b.u_inf, &k, &p, &b);
        let law = PressureLaw::from_params(&p);
        let jump = |a: f64, c: f64| (law.potential_slope(c) - law.potential_slope(a)) * (c - a);
        let rows = g.ny as f64;
        let hand = p.eps * rows * (g.dy / g.dx) * (jump(levels[0], levels[1]) + jump(levels[1], levels[2]));
        assert!((terms.eps_term - hand).abs() < 1e-12 * hand);
        let mut ledger = EnergyLedger::new(terms);
        let dt = 2e-3;
        let mut e = terms.energy;
        for s in 1..=20 {
            rho = continuity_step(&rho, &b.u_inf, &p, dt, &b, None, Exec::Serial).unwrap().rho;
            let t = state_terms(&rho, &b.u_inf, &k, &p, &b);
            assert!(t.eps_term > 0.0 && t.energy < e);
            e = t.energy;
            let row = ledger_step(&mut ledger, t, s as f64 * dt, dt);
            assert!(row.residual.abs() < 1e-2 * (ledger.initial_energy - e));
        }
    }

    #[test]
    fn inflow_slack_is_nonnegative() {
        let b = bc(24, inflow);
        let g = b.grid();
        let p = PenaltyParams::default();
        let k = ViscousOperator::uniform(g, p.mu, p.lambda);
        for level in [0.1, 0.9, 1.0, 1.7, 4.0] {
            let rho = ScalarField::constant(g, Location::Center, level);
            let t = state_terms(&rho, &b.u_inf, &k, &p, &b);
            assert!(t.convexity_slack_min >= 0.0);
            assert!(t.outflow_term >= 0.0 && t.inflow_term >= 0.0);
        }
    }

    #[test]
    fn rigidity_examples() {
        let g = StaggeredGrid::new(48, 48, 1.0, 1.0).unwrap();
        let chi = crate::body::chi_field(&body(), &g).unwrap();
        let margin = 2.0 * g.dx;
        let rigid = VectorField::from_fn(g, |x| [0.3 - 2.0 * (x[1] - 0.5), -0.1 + 2.0 * (x[0] - 0.5)]);
        assert!(rigidity_measure(&rigid, &chi, margin) <= 1e-12);
        let shear = VectorField::from_fn(g, |x| [x[1], 0.0]);
        let count = chi.data.iter().filter(|&&c| c >= margin).count() as f64;
        let area = count * g.cell_volume();
        assert!((rigidity_measure(&shear, &chi, margin) - 0.5 * area).abs() < 1e-12);
    }

    #[test]
    fn effective_flux_examples() {
        let g = StaggeredGrid::new(16, 16, 1.0, 1.0).unwrap();
        let p = PenaltyParams { a: 1.0, gamma: 2.0, delta: 0.0, ..Default::default() };
        let one = ScalarField::constant(g, Location::Center, 1.0);
        let rot = VectorField::from_fn(g, |x| [-(x[1] - 0.5), x[0] - 0.5]);
        let f = effective_viscous_flux(&one, &rot, &p);
        assert!(f.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let zero = ScalarField::zeros(g, Location::Center);
        let strain = VectorField::from_fn(g, |x| [x[0], -x[1]]);
        assert!(effective_viscous_flux(&zero, &strain, &p).max_abs() < 1e-12);
    }

    #[test]
    fn pressure_norm_examples() {
        let g = StaggeredGrid::new(16, 16, 1.0, 1.0).unwrap();
        let p = PenaltyParams::default();
        let mask: Vec<bool> = (0..256).map(|k| k % 16 < 8).collect();
        let one = ScalarField::constant(g, Location::Center, 1.0);
        let (a, b) = interior_pressure_norm(&one, &mask, &p);
        assert!((a - 0.5f64.powf(1.0 / (p.gamma + 1.0))).abs() < 1e-14);
        assert!((b - 0.5f64.powf(1.0 / (p.beta + 1.0))).abs() < 1e-14);
        let zero = ScalarField::zeros(g, Location::Center);
        assert_eq!(interior_pressure_norm(&zero, &mask, &p), (0.0, 0.0));
    }

    #[test]
    fn static_fluid_exerts_no_net_load() {
        let g = StaggeredGrid::new(48, 48, 1.0, 1.0).unwrap();
        let p = PenaltyParams::default();
        let rho = ScalarField::constant(g, Location::Center, 1.3);
        let load = surface_force_torque(&rho, &VectorField::zeros(g), &body(), &p, 2.0 * g.dx).unwrap();
        assert!(load.force[0].abs() < 1e-13 && load.force[1].abs() < 1e-13);
        assert!(load.torque.abs() < 1e-13);
        let ring = probe_ring(&body(), 0.02);
        assert!(ring.iter().all(|q| ((q[0] - 0.5).hypot(q[1] - 0.5) - 0.17).abs() < 1e-12));
        let near = BodyState::new(Shape::Disc { center: [0.2, 0.5], radius: 0.15 }, 0.03, 1.0, 64, 0.05).unwrap();
        assert!(matches!(
            surface_force_torque(&rho, &VectorField::zeros(g), &near, &p, 0.02),
            Err(SimError::ProbeOutside)
        ));
    }
}
