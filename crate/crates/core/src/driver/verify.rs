//! Named invariant checks with a machine-readable failure list.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use super::mms::{convergence_study, MmsTarget, MMS_GRIDS};
use crate::body::{body_mass_inertia, body_step, chi_field, collision_guard, project_rigid, t0_lower_bound, BodyState};
use crate::continuity::{continuity_step, negative_part_n, negative_part_n_slope, PenaltyParams, Renormalizer};
use crate::diagnostics::{energy_total, probe_ring};
use crate::exec::Exec;
use crate::fields::{
    divergence, face_gradient, integrate, laplacian_neumann, mollify, read_snapshot, sym_gradient, write_snapshot,
    Location, MollifierKernel, Point, ScalarField, StaggeredGrid, VectorField,
};
use crate::geometry::{
    build_extension, check_extension, erode, polygon_is_simple, signed_distance_primitive, BoundaryData, CutoffProfile,
    DomainSpec, Shape, Wall,
};
use crate::linsolve::{pcg, CgSettings};
use crate::momentum::{momentum_step, ramp_h, stress, MomentumOptions, PressureLaw, ViscosityModel, ViscousOperator};

/// Deliberate defects used to check that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Flip the sign of the `lambda_n` term entering the stress.
    FlipLambda,
}

impl std::str::FromStr for Fault {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "flip-lambda" => Ok(Self::FlipLambda),
            other => Err(format!("unknown fault {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub fast: bool,
    pub fault: Option<Fault>,
    pub properties: Vec<PropertyResult>,
    pub passed: usize,
    pub failures: Vec<String>,
}

type Outcome = std::result::Result<String, String>;

struct Ctx {
    fault: Option<Fault>,
    fast: bool,
}

struct Property {
    name: &'static str,
    /// Part of the `--fast` subset.
    fast: bool,
    check: fn(&Ctx) -> Outcome,
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grid(n: usize) -> StaggeredGrid {
    StaggeredGrid::new(n, n, 1.0, 1.0).expect("valid grid")
}

fn smooth_field(g: StaggeredGrid) -> VectorField {
    VectorField::from_fn(g, |p| {
        [(2.0 * p[0]).sin() * (3.0 * p[1]).cos() + 0.3 * p[1], (1.5 * p[0] * p[1]).cos() - 0.2 * p[0] * p[0]]
    })
}

fn rigid_field(g: StaggeredGrid, a: [f64; 2], w: f64, c: Point) -> VectorField {
    VectorField::from_fn(g, move |p| [a[0] - w * (p[1] - c[1]), a[1] + w * (p[0] - c[0])])
}

/// Evenly spread samples in `[lo, hi]`.
fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64)
}

fn domain() -> DomainSpec {
    DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 }
}

fn channel(g: StaggeredGrid) -> BoundaryData {
    BoundaryData::new(
        &domain(),
        g,
        |w, p| match w {
            Wall::Left | Wall::Right => [1.2 * p[1] * (1.0 - p[1]), 0.0],
            _ => [0.0, 0.0],
        },
        |_, _| 1.0,
    )
    .expect("valid boundary data")
}

const PROPERTIES: &[Property] = &[
    Property { name: "divergence_theorem", fast: true, check: divergence_theorem },
    Property { name: "gradient_divergence_adjoint", fast: true, check: gradient_divergence_adjoint },
    Property { name: "neumann_laplacian_conservative", fast: true, check: neumann_laplacian_conservative },
    Property { name: "sym_gradient_rigid_kernel", fast: true, check: sym_gradient_rigid_kernel },
    Property { name: "integrate_constant_is_area", fast: true, check: integrate_constant_is_area },
    Property { name: "snapshot_round_trip", fast: true, check: snapshot_round_trip },
    Property { name: "mollifier_unit_mass", fast: true, check: mollifier_unit_mass },
    Property { name: "mollifier_first_moments_vanish", fast: true, check: mollifier_first_moments_vanish },
    Property { name: "mollifier_reproduces_linear_fields", fast: true, check: mollifier_reproduces_linear_fields },
    Property { name: "extension_trace_match", fast: true, check: extension_trace_match },
    Property { name: "extension_divergence_nonnegative", fast: true, check: extension_divergence_nonnegative },
    Property { name: "extension_vanishes_outside_collar", fast: true, check: extension_vanishes_outside_collar },
    Property { name: "cutoff_profile_bounds", fast: true, check: cutoff_profile_bounds },
    Property { name: "erosion_offsets_distance", fast: true, check: erosion_offsets_distance },
    Property { name: "polygon_simplicity", fast: true, check: polygon_simplicity },
    Property { name: "boundary_classification", fast: true, check: boundary_classification },
    Property { name: "negative_part_limits", fast: true, check: negative_part_limits },
    Property { name: "negative_part_c1", fast: true, check: negative_part_c1 },
    Property { name: "renormalizer_derivatives", fast: true, check: renormalizer_derivatives },
    Property { name: "continuity_mass_budget", fast: true, check: continuity_mass_budget },
    Property { name: "continuity_constant_state", fast: true, check: continuity_constant_state },
    Property { name: "continuity_positivity", fast: true, check: continuity_positivity },
    Property { name: "stress_symmetry_and_trace", fast: true, check: stress_symmetry_and_trace },
    Property { name: "viscous_form_symmetric", fast: true, check: viscous_form_symmetric },
    Property { name: "viscous_form_nonnegative", fast: true, check: viscous_form_nonnegative },
    Property { name: "viscous_operator_is_form_gradient", fast: true, check: viscous_operator_is_form_gradient },
    Property { name: "viscous_rigid_kernel", fast: true, check: viscous_rigid_kernel },
    Property { name: "penalty_viscosity_support", fast: true, check: penalty_viscosity_support },
    Property { name: "convexity_slack_nonnegative", fast: true, check: convexity_slack_nonnegative },
    Property { name: "pressure_potential_identity", fast: true, check: pressure_potential_identity },
    Property { name: "momentum_static_equilibrium", fast: true, check: momentum_static_equilibrium },
    Property { name: "pcg_solves_spd_system", fast: true, check: pcg_solves_spd_system },
    Property { name: "procrustes_recovers_rigid_motion", fast: true, check: procrustes_recovers_rigid_motion },
    Property { name: "procrustes_rejects_degenerate", fast: true, check: procrustes_rejects_degenerate },
    Property { name: "marker_isometry", fast: true, check: marker_isometry },
    Property { name: "body_mass_inertia", fast: true, check: body_mass_inertia_disc },
    Property { name: "chi_is_signed_distance", fast: true, check: chi_is_signed_distance },
    Property { name: "collision_guard_margin", fast: true, check: collision_guard_margin },
    Property { name: "t0_lower_bound_formula", fast: true, check: t0_lower_bound_formula },
    Property { name: "energy_of_rest_state", fast: true, check: energy_of_rest_state },
    Property { name: "probe_ring_offset", fast: true, check: probe_ring_offset },
    Property { name: "serial_parallel_identical", fast: true, check: serial_parallel_identical },
    Property { name: "mms_continuity_order", fast: false, check: mms_continuity_order },
    Property { name: "mms_momentum_order", fast: false, check: mms_momentum_order },
];

/// Names of every property, in execution order.
pub fn property_names(fast: bool) -> Vec<&'static str> {
    PROPERTIES.iter().filter(|p| p.fast || !fast).map(|p| p.name).collect()
}

/// Runs the suite. `fast` keeps the subset that finishes in seconds.
pub fn verify(fast: bool, fault: Option<Fault>) -> VerifyReport {
    let ctx = Ctx { fault, fast };
    let properties: Vec<PropertyResult> = PROPERTIES
        .iter()
        .filter(|p| p.fast || !fast)
        .map(|p| {
            let start = Instant::now();
            let outcome =
                std::panic::catch_unwind(|| (p.check)(&ctx)).unwrap_or_else(|_| Err("check panicked".to_string()));
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match outcome {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            PropertyResult { name: p.name.to_string(), passed, seconds, detail }
        })
        .collect();
    let failures = properties.iter().filter(|p| !p.passed).map(|p| p.name.clone()).collect();
    let passed = properties.iter().filter(|p| p.passed).count();
    VerifyReport { fast, fault, properties, passed, failures }
}

fn divergence_theorem(_: &Ctx) -> Outcome {
    let g = grid(24);
    let u = smooth_field(g);
    let total = integrate(&divergence(&u), None);
    let mut flux = 0.0;
    for j in 0..g.ny {
        flux += (u.ux.at(g.nx, j) - u.ux.at(0, j)) * g.dy;
    }
    for i in 0..g.nx {
        flux += (u.uy.at(i, g.ny) - u.uy.at(i, 0)) * g.dx;
    }
    let err = (total - flux).abs();
    ensure(err <= 1e-12, format!("|int div u - boundary flux| = {err:.3e}"))
}

fn gradient_divergence_adjoint(_: &Ctx) -> Outcome {
    let g = grid(20);
    let p = ScalarField::from_fn(g, Location::Center, |x| (3.0 * x[0]).cos() * (2.0 * x[1] + 0.3).sin());
    let mut u = smooth_field(g);
    for j in 0..g.ny {
        u.ux.set(0, j, 0.0);
        u.ux.set(g.nx, j, 0.0);
    }
    for i in 0..g.nx {
        u.uy.set(i, 0, 0.0);
        u.uy.set(i, g.ny, 0.0);
    }
    let lhs = integrate(&divergence(&u).zip_map(&p, |d, q| d * q), None);
    let gp = face_gradient(&p);
    let v = g.cell_volume();
    let rhs: f64 = -v
        * (gp.ux.data.iter().zip(&u.ux.data).map(|(a, b)| a * b).sum::<f64>()
            + gp.uy.data.iter().zip(&u.uy.data).map(|(a, b)| a * b).sum::<f64>());
    let err = (lhs - rhs).abs();
    ensure(err <= 1e-12, format!("|<div u, p> + <u, grad p>| = {err:.3e}"))
}

fn neumann_laplacian_conservative(_: &Ctx) -> Outcome {
    let g = grid(18);
    let p = ScalarField::from_fn(g, Location::Center, |x| (x[0] * x[0] - x[1]).exp());
    let total = integrate(&laplacian_neumann(&p), None);
    ensure(total.abs() <= 1e-12, format!("int lap p = {total:.3e}"))
}

fn sym_gradient_rigid_kernel(_: &Ctx) -> Outcome {
    let g = grid(32);
    let worst = [([0.3, -0.2], 1.7, [0.4, 0.6]), ([0.0, 0.0], -3.0, [0.5, 0.5]), ([1.0, 2.0], 0.0, [0.0, 0.0])]
        .into_iter()
        .map(|(a, w, c)| sym_gradient(&rigid_field(g, a, w, c)).max_abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-12, format!("max |D(rigid)| = {worst:.3e}"))
}

fn integrate_constant_is_area(_: &Ctx) -> Outcome {
    let g = StaggeredGrid::new(30, 20, 1.5, 1.0).expect("grid");
    let area = integrate(&ScalarField::constant(g, Location::Center, 1.0), None);
    let err = (area - 1.5).abs();
    ensure(err <= 1e-13, format!("|area - 1.5| = {err:.3e}"))
}

fn snapshot_round_trip(_: &Ctx) -> Outcome {
    let g = grid(12);
    let f = ScalarField::from_fn(g, Location::Center, |p| (p[0] * 7.1).sin() / 3.0 + p[1]);
    let path = std::env::temp_dir().join(format!("rigidflow-verify-{}.txt", std::process::id()));
    let back = write_snapshot(&path, &f).and_then(|_| read_snapshot(&path));
    let _ = std::fs::remove_file(&path);
    match back {
        Ok(b) => ensure(b.data == f.data && b.loc == f.loc, "bitwise round trip".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn mollifier_unit_mass(_: &Ctx) -> Outcome {
    let g = grid(64);
    let worst = [0.032, 0.05, 0.1]
        .into_iter()
        .map(|r| (MollifierKernel::new(&g, r).expect("kernel").weight_sum() - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-14, format!("max |sum w - 1| = {worst:.3e}"))
}

fn mollifier_first_moments_vanish(_: &Ctx) -> Outcome {
    let g = grid(64);
    let k = MollifierKernel::new(&g, 0.05).expect("kernel");
    let (mx, my) = k.weights().fold((0.0, 0.0), |(a, b), (i, j, w)| (a + w * i as f64, b + w * j as f64));
    let worst = mx.abs().max(my.abs());
    ensure(worst <= 1e-14, format!("first moments ({mx:.3e}, {my:.3e})"))
}

fn mollifier_reproduces_linear_fields(_: &Ctx) -> Outcome {
    let g = grid(48);
    let k = MollifierKernel::new(&g, 0.05).expect("kernel");
    let f = ScalarField::from_fn(g, Location::Center, |p| 2.0 * p[0] - 0.7 * p[1] + 0.1);
    let m = mollify(&f, &k);
    let (ri, rj) = k.reach();
    let mut worst = 0.0f64;
    for j in rj as usize..g.ny - rj as usize {
        for i in ri as usize..g.nx - ri as usize {
            worst = worst.max((m.at(i, j) - f.at(i, j)).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max interior deviation {worst:.3e}"))
}

fn extension_data(n: usize) -> (VectorField, VectorField, f64) {
    let bc = channel(grid(n));
    let collar = domain().collar;
    (bc.u_b.clone(), bc.u_inf.clone(), collar)
}

fn extension_trace_match(_: &Ctx) -> Outcome {
    let (ub, uinf, c) = extension_data(64);
    let e = check_extension(&ub, &uinf, c).trace_error;
    ensure(e <= 1e-10, format!("trace error {e:.3e}"))
}

fn extension_divergence_nonnegative(_: &Ctx) -> Outcome {
    let (ub, uinf, c) = extension_data(64);
    let d = check_extension(&ub, &uinf, c).min_div_collar;
    let (_, report) = build_extension(&ub, c).map_err(|e| e.to_string())?;
    ensure(d >= -1e-12, format!("min div on the collar {d:.3e}, compensation {:.3e}", report.compensation))
}

fn extension_vanishes_outside_collar(_: &Ctx) -> Outcome {
    let (ub, uinf, c) = extension_data(64);
    let m = check_extension(&ub, &uinf, c).max_outside;
    ensure(m == 0.0, format!("max |u_inf| outside the double collar {m:.3e}"))
}

fn cutoff_profile_bounds(_: &Ctx) -> Outcome {
    let c = CutoffProfile::for_margin(0.1);
    let mut prev = 0.0;
    for d in samples(0.0, 0.2, 400) {
        let v = c.value(d);
        if !(0.0..=1.0).contains(&v) || v < prev {
            return Err(format!("value {v} at distance {d} leaves [0, 1] or decreases"));
        }
        prev = v;
    }
    let ends = c.value(0.05) == 0.0 && c.value(0.1) == 1.0 && c.value(0.0) == 0.0 && c.value(0.3) == 1.0;
    ensure(ends, "zero within h/2, one beyond h, monotone between".into())
}

fn erosion_offsets_distance(_: &Ctx) -> Outcome {
    let shapes = [
        Shape::Disc { center: [0.5, 0.5], radius: 0.2 },
        Shape::Rectangle { center: [0.4, 0.6], half: [0.2, 0.1], angle: 0.3 },
    ];
    let r = 0.03;
    let mut worst = 0.0f64;
    for s in shapes {
        let o = erode(&s, r).map_err(|e| e.to_string())?;
        for x in samples(0.1, 0.9, 25) {
            for y in samples(0.1, 0.9, 25) {
                let p = [x, y];
                let (d, e) = (signed_distance_primitive(p, &s), signed_distance_primitive(p, &o));
                if e >= 0.0 {
                    worst = worst.max((e - (d - r)).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-12, format!("max |d_O - (d_S - r)| inside O = {worst:.3e}"))
}

fn polygon_simplicity(_: &Ctx) -> Outcome {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
    ensure(polygon_is_simple(&square) && !polygon_is_simple(&bowtie), "square simple, bowtie not".into())
}

fn boundary_classification(_: &Ctx) -> Outcome {
    let bc = channel(grid(16));
    let mut bad = 0;
    for (k, f) in bc.faces.iter().enumerate() {
        let expect_in = f.wall == Wall::Left;
        let expect_out = f.wall != Wall::Left;
        if bc.in_mask[k] != expect_in || bc.out_mask[k] != expect_out {
            bad += 1;
        }
    }
    ensure(bad == 0, format!("{bad} misclassified faces"))
}

fn negative_part_limits(_: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    for n in [4.0, 16.0, 64.0, 256.0] {
        for v in samples(-2.0, 2.0, 801) {
            let a = negative_part_n(v, n);
            let gap = (a - v.min(0.0)).abs();
            if gap > 0.25 / n + 1e-15 || a > v.min(0.0) + 1e-15 {
                return Err(format!("[{v}]_N = {a} out of bounds at N = {n}"));
            }
            if v.abs() >= 1.0 / n && gap != 0.0 {
                return Err(format!("[{v}]_N differs from min(v, 0) outside the blend at N = {n}"));
            }
            worst = worst.max(gap * n);
        }
    }
    ensure(true, format!("max N |[v]_N - min(v, 0)| = {worst:.3}"))
}

fn negative_part_c1(_: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    for n in [4.0, 64.0] {
        for v in samples(-1.0, 1.0, 401) {
            let h = 1e-7;
            let fd = (negative_part_n(v + h, n) - negative_part_n(v - h, n)) / (2.0 * h);
            worst = worst.max((fd - negative_part_n_slope(v, n)).abs());
        }
        for k in [-1.0, 1.0] {
            let v = k / n;
            worst = worst.max((negative_part_n_slope(v - 1e-12, n) - negative_part_n_slope(v + 1e-12, n)).abs());
        }
    }
    ensure(worst <= 1e-5, format!("max slope mismatch {worst:.3e}"))
}

fn renormalizer_derivatives(_: &Ctx) -> Outcome {
    let mut worst = 0.0f64;
    for b in [Renormalizer::Identity, Renormalizer::Constant(2.5), Renormalizer::Square, Renormalizer::ZLogZ] {
        for z in samples(0.2, 3.0, 40) {
            let h = 1e-5;
            let d1 = (b.b(z + h) - b.b(z - h)) / (2.0 * h);
            let d2 = (b.db(z + h) - b.db(z - h)) / (2.0 * h);
            worst = worst.max((d1 - b.db(z)).abs()).max((d2 - b.ddb(z)).abs());
        }
    }
    ensure(worst <= 1e-6, format!("max derivative mismatch {worst:.3e}"))
}

fn shear_velocity(g: StaggeredGrid, bc: &BoundaryData) -> VectorField {
    let mut u = VectorField::from_fn(g, |p| [1.2 * p[1] * (1.0 - p[1]), 0.05 * (PI * p[0]).sin() * (PI * p[1]).sin()]);
    bc.apply_dirichlet(&mut u);
    u
}

fn continuity_mass_budget(_: &Ctx) -> Outcome {
    let g = grid(32);
    let bc = channel(g);
    let params = PenaltyParams::default();
    let u = shear_velocity(g, &bc);
    let mut rho = ScalarField::from_fn(g, Location::Center, |p| 1.0 + 0.3 * (2.0 * PI * p[0]).cos() * p[1]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s = continuity_step(&rho, &u, &params, 0.01, &bc, None, Exec::Serial).map_err(|e| e.to_string())?;
        worst = worst.max(s.mass_residual.abs());
        rho = s.rho;
    }
    ensure(worst <= 1e-10, format!("max relative mass residual {worst:.3e}"))
}

fn continuity_constant_state(_: &Ctx) -> Outcome {
    let g = grid(24);
    let bc = BoundaryData::new(&domain(), g, |_, _| [0.0, 0.0], |_, _| 1.3).map_err(|e| e.to_string())?;
    let rho = ScalarField::constant(g, Location::Center, 1.3);
    let s = continuity_step(&rho, &VectorField::zeros(g), &PenaltyParams::default(), 0.01, &bc, None, Exec::Serial)
        .map_err(|e| e.to_string())?;
    let dev = s.rho.data.iter().map(|r| (r - 1.3).abs()).fold(0.0, f64::max);
    ensure(dev <= 1e-13, format!("max deviation {dev:.3e}"))
}

fn continuity_positivity(_: &Ctx) -> Outcome {
    let g = grid(32);
    let bc = channel(g);
    let u = shear_velocity(g, &bc);
    let mut rho = ScalarField::from_fn(g, Location::Center, |p| if p[0] < 0.5 { 1e-3 } else { 1.0 });
    for _ in 0..40 {
        rho = continuity_step(&rho, &u, &PenaltyParams::default(), 0.01, &bc, None, Exec::Serial)
            .map_err(|e| e.to_string())?
            .rho;
    }
    let m = rho.min();
    ensure(m > 0.0, format!("min density {m:.3e}"))
}

fn stress_symmetry_and_trace(ctx: &Ctx) -> Outcome {
    let g = grid(24);
    let u = smooth_field(g);
    let mu = ScalarField::from_fn(g, Location::Center, |p| 0.1 + p[0] * p[1]);
    let lambda = ScalarField::from_fn(g, Location::Center, |p| 0.2 + 0.5 * p[0]);
    let used = match ctx.fault {
        Some(Fault::FlipLambda) => lambda.map(|l| -l),
        None => lambda.clone(),
    };
    let s = stress(&u, &mu, &used);
    let d = sym_gradient(&u);
    let mut worst = 0.0f64;
    for k in 0..s.xx.data.len() {
        let div = d.xx.data[k] + d.yy.data[k];
        let (m, l) = (mu.data[k], lambda.data[k]);
        let trace = s.xx.data[k] + s.yy.data[k] - 2.0 * (m + l) * div;
        let dev = s.xx.data[k] - s.yy.data[k] - 2.0 * m * (d.xx.data[k] - d.yy.data[k]);
        let shear = s.xy.data[k] - 2.0 * m * d.xy.data[k];
        worst = worst.max(trace.abs()).max(dev.abs()).max(shear.abs());
    }
    ensure(worst <= 1e-12, format!("max trace/deviator mismatch {worst:.3e}"))
}

fn variable_operator(g: StaggeredGrid) -> ViscousOperator {
    let mu = ScalarField::from_fn(g, Location::Center, |p| 0.1 + 3.0 * (p[0] - 0.5).powi(2));
    let la = ScalarField::from_fn(g, Location::Center, |p| -0.05 + p[1]);
    ViscousOperator::new(&mu, &la)
}

fn interior_only(mut u: VectorField) -> VectorField {
    let g = u.grid();
    for j in 0..g.ny {
        u.ux.set(0, j, 0.0);
        u.ux.set(g.nx, j, 0.0);
    }
    for i in 0..g.nx {
        u.uy.set(i, 0, 0.0);
        u.uy.set(i, g.ny, 0.0);
    }
    u.traces = crate::fields::WallTraces::zeros(&g);
    u
}

fn viscous_form_symmetric(_: &Ctx) -> Outcome {
    let g = grid(16);
    let k = variable_operator(g);
    let u = smooth_field(g);
    let v = rigid_field(g, [0.1, 0.4], 0.7, [0.2, 0.3]).add(&VectorField::from_fn(g, |p| [p[0] * p[0], -p[1]]));
    let (a, b) = (k.bilinear(&u, &v), k.bilinear(&v, &u));
    let err = (a - b).abs() / a.abs().max(1.0);
    ensure(err <= 1e-13, format!("|a(u,v) - a(v,u)| = {err:.3e}"))
}

fn viscous_form_nonnegative(_: &Ctx) -> Outcome {
    let g = grid(16);
    let k = variable_operator(g);
    let mut worst = f64::INFINITY;
    for s in 0..12 {
        let f = s as f64 + 1.0;
        let u = VectorField::from_fn(g, |p| [(f * p[0] + p[1]).sin(), (f * p[1] - 2.0 * p[0]).cos()]);
        worst = worst.min(k.bilinear(&u, &u));
    }
    ensure(worst >= 0.0, format!("min a(u,u) = {worst:.3e}"))
}

fn viscous_operator_is_form_gradient(_: &Ctx) -> Outcome {
    let g = grid(16);
    let k = variable_operator(g);
    let u = smooth_field(g);
    let v = interior_only(VectorField::from_fn(g, |p| [(3.0 * p[1]).sin() * p[0], p[0] * p[1]]));
    let ku = k.apply(&u);
    let lhs: f64 = ku.ux.data.iter().zip(&v.ux.data).map(|(a, b)| a * b).sum::<f64>()
        + ku.uy.data.iter().zip(&v.uy.data).map(|(a, b)| a * b).sum::<f64>();
    let rhs = k.bilinear(&u, &v);
    let err = (lhs - rhs).abs() / rhs.abs().max(1e-300);
    ensure(err <= 1e-12, format!("relative |<Ku, v> - a(u, v)| = {err:.3e}"))
}

fn viscous_rigid_kernel(_: &Ctx) -> Outcome {
    let g = grid(24);
    let k = variable_operator(g);
    let u = rigid_field(g, [0.2, -0.1], 1.3, [0.45, 0.55]);
    let worst = k.apply(&u).max_abs() / g.cell_volume();
    ensure(worst <= 1e-10, format!("max |K(rigid)| / V = {worst:.3e}"))
}

fn penalty_viscosity_support(_: &Ctx) -> Outcome {
    let params = PenaltyParams::default();
    let m = ViscosityModel::from_params(&params);
    let ok = m.increment(-params.r - 1e-9, 0.5) == 0.0
        && m.increment(0.1, 0.5) > 0.0
        && m.increment(0.1, 0.5 * params.h) == 0.0
        && ramp_h(-0.3) == 0.0
        && ramp_h(0.3) == 0.09;
    ensure(ok, "zero outside chi > -r or near the walls, positive inside".into())
}

fn convexity_slack_nonnegative(_: &Ctx) -> Outcome {
    let law = PressureLaw::from_params(&PenaltyParams::default());
    let mut worst = f64::INFINITY;
    for a in samples(1e-3, 5.0, 120) {
        for b in samples(1e-3, 5.0, 120) {
            worst = worst.min(law.convexity_slack(a, b) / (1.0 + law.potential_delta(b).abs()));
        }
    }
    ensure(worst >= -1e-12, format!("min normalized slack {worst:.3e}"))
}

fn pressure_potential_identity(_: &Ctx) -> Outcome {
    let law = PressureLaw::from_params(&PenaltyParams::default());
    let mut worst = 0.0f64;
    for r in samples(0.05, 4.0, 80) {
        let err = r * law.potential_slope(r) - law.potential_delta(r) - law.p_delta(r);
        let h = 1e-6 * r;
        let fd = (law.p_delta(r + h) - law.p_delta(r - h)) / (2.0 * h);
        worst = worst.max(err.abs() / law.p_delta(r)).max((fd - law.sound_speed_sq(r)).abs() / fd);
    }
    ensure(worst <= 1e-7, format!("max relative mismatch {worst:.3e}"))
}

fn momentum_static_equilibrium(_: &Ctx) -> Outcome {
    let g = grid(24);
    let params = PenaltyParams::default();
    let bc = BoundaryData::new(&domain(), g, |_, _| [0.0, 0.0], |_, _| 1.0).map_err(|e| e.to_string())?;
    let rho = ScalarField::constant(g, Location::Center, 1.0);
    let visc = ViscousOperator::uniform(g, params.mu, params.lambda);
    let mut u = VectorField::zeros(g);
    let opts = MomentumOptions { source: None, pinned: None, exec: Exec::Serial };
    for _ in 0..20 {
        u = momentum_step(&rho, &rho, &u, &visc, &params, 0.01, &bc, &opts).map_err(|e| e.to_string())?.u;
    }
    let m = u.max_abs();
    ensure(m <= 1e-14, format!("max |u| = {m:.3e}"))
}

fn pcg_solves_spd_system(_: &Ctx) -> Outcome {
    let n = 50;
    let exact: Vec<f64> = (0..n).map(|k| (k as f64 * 0.3).sin()).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..n {
            let l = if k > 0 { x[k - 1] } else { 0.0 };
            let r = if k + 1 < n { x[k + 1] } else { 0.0 };
            out[k] = 2.5 * x[k] - l - r;
        }
    };
    let mut b = vec![0.0; n];
    apply(&exact, &mut b);
    let mut x = vec![0.0; n];
    let s = CgSettings { tol: 1e-13, max_iter: 500, exec: Exec::Serial };
    pcg(apply, &vec![2.5; n], &b, &mut x, s).map_err(|e| e.to_string())?;
    let err = x.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-10, format!("max error {err:.3e}"))
}

fn procrustes_recovers_rigid_motion(_: &Ctx) -> Outcome {
    let reference: Vec<Point> =
        (0..40).map(|k| (k as f64 * 0.7).sin_cos()).map(|(s, c)| [0.1 * c + 0.01 * s, 0.07 * s]).collect();
    let centroid = reference.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / 40.0, a[1] + p[1] / 40.0]);
    let reference: Vec<Point> = reference.iter().map(|p| [p[0] - centroid[0], p[1] - centroid[1]]).collect();
    let mut worst = 0.0f64;
    for (x, th) in [([0.3, 0.6], 0.4), ([0.5, 0.5], -2.9), ([0.71, 0.22], 3.1)] {
        let (s, c) = f64::sin_cos(th);
        let moved: Vec<Point> =
            reference.iter().map(|p| [x[0] + c * p[0] - s * p[1], x[1] + s * p[0] + c * p[1]]).collect();
        let fit = project_rigid(&reference, &moved).map_err(|e| e.to_string())?;
        let dth = (fit.theta - th + PI).rem_euclid(2.0 * PI) - PI;
        worst = worst.max((fit.x[0] - x[0]).abs()).max((fit.x[1] - x[1]).abs()).max(dth.abs()).max(fit.defect);
    }
    ensure(worst <= 1e-12, format!("max pose error {worst:.3e}"))
}

fn procrustes_rejects_degenerate(_: &Ctx) -> Outcome {
    let pts = vec![[0.0, 0.0]; 5];
    ensure(project_rigid(&pts, &pts).is_err(), "coincident markers rejected".into())
}

fn marker_isometry(ctx: &Ctx) -> Outcome {
    let g = grid(48);
    let body = BodyState::new(Shape::Disc { center: [0.5, 0.5], radius: 0.15 }, 0.05, 1.0, 64, 0.05)
        .map_err(|e| e.to_string())?;
    let kernel = MollifierKernel::new(&g, 0.05).map_err(|e| e.to_string())?;
    let u = rigid_field(g, [0.0, 0.0], 0.5, [0.5, 0.5]).add(&VectorField::from_fn(g, |p| [0.01 * p[1], 0.0]));
    let steps = if ctx.fast { 100 } else { 1000 };
    let mut b = body;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        b = body_step(&b, &u, &kernel, 2e-3).map_err(|e| e.to_string())?;
        worst = worst.max(b.isometry_defect());
    }
    ensure(worst <= 1e-12, format!("max pairwise drift {worst:.3e} over {steps} steps, theta = {:.4}", b.theta))
}

fn body_mass_inertia_disc(_: &Ctx) -> Outcome {
    let m =
        body_mass_inertia(2.0, &Shape::Disc { center: [0.5, 0.5], radius: 0.2 }, 0.03).map_err(|e| e.to_string())?;
    let mass = 2.0 * PI * 0.04;
    let err = (m.mass - mass).abs().max((m.inertia - 0.5 * mass * 0.04).abs());
    ensure(err <= 1e-14, format!("disc mass/inertia error {err:.3e}"))
}

fn chi_is_signed_distance(_: &Ctx) -> Outcome {
    let g = grid(40);
    let body = BodyState::new(Shape::Disc { center: [0.5, 0.5], radius: 0.2 }, 0.05, 1.0, 64, 0.05)
        .map_err(|e| e.to_string())?;
    let chi = chi_field(&body, &g).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for k in 0..chi.data.len() {
        let p = chi.position(k);
        let d = 0.15 - ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt();
        worst = worst.max((chi.data[k] - d).abs());
    }
    ensure(worst <= 1e-12, format!("max |chi - d_O| = {worst:.3e}"))
}

fn collision_guard_margin(_: &Ctx) -> Outcome {
    let body = BodyState::new(Shape::Disc { center: [0.7, 0.5], radius: 0.15 }, 0.03, 1.0, 64, 0.03)
        .map_err(|e| e.to_string())?;
    let g = collision_guard(&body, 1.0, 1.0, 0.1, 0.03);
    let expect = (1.0 - 0.82) - 0.13;
    let err = (g.margin - expect).abs();
    ensure(err <= 1e-12 && g.ok, format!("margin {:.6} expected {expect:.6}", g.margin))
}

fn t0_lower_bound_formula(_: &Ctx) -> Outcome {
    let a = t0_lower_bound(0.35, 0.1, 0.5, 1.0).map_err(|e| e.to_string())?;
    let b = t0_lower_bound(0.35, 0.1, 0.1, 1.0).map_err(|e| e.to_string())?;
    let rejects = t0_lower_bound(0.1, 0.1, 0.5, 1.0).is_err();
    ensure((a - 0.25).abs() <= 1e-14 && b == 1.0 && rejects, format!("t0 = {a}, capped {b}"))
}

fn energy_of_rest_state(_: &Ctx) -> Outcome {
    let g = grid(20);
    let params = PenaltyParams::default();
    let law = PressureLaw::from_params(&params);
    let rho = ScalarField::constant(g, Location::Center, 1.4);
    let e = energy_total(&rho, &VectorField::zeros(g), &VectorField::zeros(g), &params);
    let err = (e - law.potential_delta(1.4)).abs();
    ensure(err <= 1e-13, format!("|E - P(rho) |Omega|| = {err:.3e}"))
}

fn probe_ring_offset(_: &Ctx) -> Outcome {
    let body = BodyState::new(Shape::Disc { center: [0.5, 0.5], radius: 0.15 }, 0.03, 1.0, 64, 0.03)
        .map_err(|e| e.to_string())?;
    let ring = probe_ring(&body, 0.02);
    let worst =
        ring.iter().map(|p| (((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 0.17).abs()).fold(0.0, f64::max);
    ensure(worst <= 1e-12 && ring.len() >= 16, format!("max radius error {worst:.3e}"))
}

fn serial_parallel_identical(_: &Ctx) -> Outcome {
    let g = grid(32);
    let bc = channel(g);
    let params = PenaltyParams::default();
    let u = shear_velocity(g, &bc);
    let rho = ScalarField::from_fn(g, Location::Center, |p| 1.0 + 0.2 * p[0] * p[1]);
    let visc = variable_operator(g);
    let step = |exec: Exec| -> crate::Result<(Vec<f64>, Vec<f64>)> {
        let c = continuity_step(&rho, &u, &params, 0.01, &bc, None, exec)?;
        let opts = MomentumOptions { source: None, pinned: None, exec };
        let m = momentum_step(&rho, &c.rho, &u, &visc, &params, 0.01, &bc, &opts)?;
        Ok((c.rho.data, m.u.ux.data.into_iter().chain(m.u.uy.data).collect()))
    };
    let (a, b) = (step(Exec::Serial).map_err(|e| e.to_string())?, step(Exec::Parallel).map_err(|e| e.to_string())?);
    let same = a.0.iter().zip(&b.0).chain(a.1.iter().zip(&b.1)).all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(same, "bitwise identical density and velocity".into())
}

fn mms_order(target: MmsTarget) -> Outcome {
    let r = convergence_study(target, &MMS_GRIDS, Exec::Parallel).map_err(|e| e.to_string())?;
    let o = r.min_order();
    ensure(o >= 0.9, format!("orders {:?}", r.orders.iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>()))
}

fn mms_continuity_order(_: &Ctx) -> Outcome {
    mms_order(MmsTarget::Continuity)
}

fn mms_momentum_order(_: &Ctx) -> Outcome {
    mms_order(MmsTarget::Momentum)
}
