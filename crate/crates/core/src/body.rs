//! Rigid body transported by the mollified fluid velocity.
//!
//! The body is represented by material markers on the boundary of the eroded
//! set `O` and on a coarse interior lattice. Each step moves the markers with
//! the mollified velocity and projects the result back onto a rigid motion,
//! so the marker configuration is always an exact isometric image of the
//! reference configuration.

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::fields::{mollify_vector, Location, MollifierKernel, Point, ScalarField, StaggeredGrid, VectorField};
use crate::geometry::{erode, polygon_is_simple, polygon_signed_distance, signed_distance_primitive, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BodyInertia {
    pub mass: f64,
    pub inertia: f64,
}

/// Mass and moment of inertia of the solid `S`, the `r`-dilation of the eroded
/// set. `shape` is the physical solid.
pub fn body_mass_inertia(rho_s: f64, shape: &Shape, r: f64) -> Result<BodyInertia> {
    if !(rho_s > 0.0 && rho_s.is_finite()) {
        return Err(SimError::InvalidParams(format!("solid density {rho_s} must be positive")));
    }
    shape.validate()?;
    erode(shape, r)?;
    let mass = rho_s * shape.area();
    let inertia = match *shape {
        Shape::Disc { radius, .. } => 0.5 * mass * radius * radius,
        Shape::Rectangle { half, .. } => mass * (half[0] * half[0] + half[1] * half[1]) / 3.0,
    };
    if !(mass > 0.0 && inertia > 0.0) {
        return Err(SimError::InvalidShape(format!("degenerate solid with mass {mass}")));
    }
    Ok(BodyInertia { mass, inertia })
}

fn rotate(theta: f64, y: Point) -> Point {
    let (s, c) = theta.sin_cos();
    [c * y[0] - s * y[1], s * y[0] + c * y[1]]
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    a - two_pi * (a / two_pi).round()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyState {
    /// Center of mass.
    pub x: Point,
    pub theta: f64,
    pub v: [f64; 2],
    pub w: f64,
    /// Marker positions relative to the center in the reference orientation.
    /// The first `boundary_count` entries trace the boundary of `O`
    /// counterclockwise.
    pub reference: Vec<Point>,
    pub markers: Vec<Point>,
    pub boundary_count: usize,
    /// Physical solid in the reference placement.
    pub shape: Shape,
    /// Eroded set `O` in the reference placement.
    pub eroded: Shape,
    pub r: f64,
    pub rho_s: f64,
    /// Root-mean-square residual of the last rigid projection.
    pub rigidity_defect: f64,
}

impl BodyState {
    /// Body at rest in the placement given by `shape`, with `boundary_markers`
    /// markers on the boundary of `O` and an interior lattice of spacing
    /// `lattice`.
    pub fn new(shape: Shape, r: f64, rho_s: f64, boundary_markers: usize, lattice: f64) -> Result<Self> {
        body_mass_inertia(rho_s, &shape, r)?;
        if boundary_markers < 3 || !(lattice > 0.0) {
            return Err(SimError::DegenerateMarkers);
        }
        let eroded = erode(&shape, r)?;
        let (x, theta) = match shape {
            Shape::Disc { center, .. } => (center, 0.0),
            Shape::Rectangle { center, angle, .. } => (center, angle),
        };
        let local = eroded.placed([0.0, 0.0], 0.0);
        let mut reference = boundary_outline(&local, boundary_markers);
        let boundary_count = reference.len();
        let reach = local.circumradius();
        let m = (reach / lattice).floor() as i64;
        for b in -m..=m {
            for a in -m..=m {
                let y = [a as f64 * lattice, b as f64 * lattice];
                if signed_distance_primitive(y, &local) > 0.5 * lattice {
                    reference.push(y);
                }
            }
        }
        let markers = reference.iter().map(|&y| place(x, theta, y)).collect();
        Ok(Self {
            x,
            theta,
            v: [0.0, 0.0],
            w: 0.0,
            reference,
            markers,
            boundary_count,
            shape: shape.placed([0.0, 0.0], 0.0),
            eroded: local,
            r,
            rho_s,
            rigidity_defect: 0.0,
        })
    }

    pub fn inertia(&self) -> BodyInertia {
        body_mass_inertia(self.rho_s, &self.shape, self.r).expect("validated at construction")
    }

    /// Physical solid `S(t)` at the current placement.
    pub fn solid(&self) -> Shape {
        self.shape.placed(self.x, self.theta)
    }

    /// Eroded set `O(t)` at the current placement.
    pub fn eroded_now(&self) -> Shape {
        self.eroded.placed(self.x, self.theta)
    }

    pub fn boundary_markers(&self) -> &[Point] {
        &self.markers[..self.boundary_count]
    }

    /// Largest deviation of pairwise marker distances from the reference.
    pub fn isometry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let n = self.markers.len();
        for a in 0..n {
            for b in a + 1..n {
                let d0 = dist(self.reference[a], self.reference[b]);
                let d1 = dist(self.markers[a], self.markers[b]);
                worst = worst.max((d1 - d0).abs());
            }
        }
        worst
    }
}

fn place(x: Point, theta: f64, y: Point) -> Point {
    let q = rotate(theta, y);
    [x[0] + q[0], x[1] + q[1]]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn boundary_outline(shape: &Shape, count: usize) -> Vec<Point> {
    match *shape {
        Shape::Disc { radius, .. } => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect(),
        Shape::Rectangle { half, .. } => {
            let corners = [[half[0], -half[1]], [half[0], half[1]], [-half[0], half[1]], [-half[0], -half[1]]];
            let perimeter = 4.0 * (half[0] + half[1]);
            let mut out = Vec::with_capacity(count + 4);
            for e in 0..4 {
                let (a, b) = (corners[(e + 3) % 4], corners[e]);
                let len = dist(a, b);
                let pieces = ((count as f64 * len / perimeter).round() as usize).max(1);
                for s in 0..pieces {
                    let f = s as f64 / pieces as f64;
                    out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidFit {
    pub x: Point,
    pub theta: f64,
    /// Root-sum-square residual of the fit.
    pub defect: f64,
}

/// Least-squares rigid motion `y -> X + Q(theta) y` taking `reference` onto `moved`.
pub fn project_rigid(reference: &[Point], moved: &[Point]) -> Result<RigidFit> {
    let n = reference.len();
    if n < 3 || moved.len() != n {
        return Err(SimError::DegenerateMarkers);
    }
    let mean = |pts: &[Point]| {
        let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n as f64, s[1] / n as f64]
    };
    let (yc, pc) = (mean(reference), mean(moved));
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for (y, p) in reference.iter().zip(moved) {
        let a = [y[0] - yc[0], y[1] - yc[1]];
        let b = [p[0] - pc[0], p[1] - pc[1]];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
        spread += a[0] * a[0] + a[1] * a[1];
    }
    let scale = spread.max(f64::MIN_POSITIVE);
    let mut collinear = 0.0;
    for y in reference {
        for z in reference {
            let a = [y[0] - yc[0], y[1] - yc[1]];
            let b = [z[0] - yc[0], z[1] - yc[1]];
            collinear += (a[0] * b[1] - a[1] * b[0]).abs();
        }
        if collinear > 1e-12 * scale {
            break;
        }
    }
    if spread == 0.0 || collinear <= 1e-12 * scale {
        return Err(SimError::DegenerateMarkers);
    }
    let theta = cross.atan2(dot);
    let ry = rotate(theta, yc);
    let x = [pc[0] - ry[0], pc[1] - ry[1]];
    let defect = reference
        .iter()
        .zip(moved)
        .map(|(&y, p)| {
            let q = place(x, theta, y);
            (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(RigidFit { x, theta, defect })
}

/// Advances the body one step: explicit midpoint transport of the markers by
/// the mollified velocity, then rigid projection.
pub fn body_step(body: &BodyState, u: &VectorField, kernel: &MollifierKernel, dt: f64) -> Result<BodyState> {
    let g = u.grid();
    let (lx, ly) = (g.lx(), g.ly());
    let guard = |p: Point| -> Result<()> {
        let d = p[0].min(lx - p[0]).min(p[1]).min(ly - p[1]);
        if d > kernel.radius {
            Ok(())
        } else {
            Err(SimError::MarkerEscaped { x: p[0], y: p[1] })
        }
    };
    let smooth = mollify_vector(u, kernel);
    let mut still = true;
    let mut moved = Vec::with_capacity(body.markers.len());
    for &p in &body.markers {
        guard(p)?;
        let a = smooth.sample(p);
        let mid = [p[0] + 0.5 * dt * a[0], p[1] + 0.5 * dt * a[1]];
        guard(mid)?;
        let b = smooth.sample(mid);
        still &= b == [0.0, 0.0];
        moved.push([p[0] + dt * b[0], p[1] + dt * b[1]]);
    }
    if still {
        let mut next = body.clone();
        next.v = [0.0, 0.0];
        next.w = 0.0;
        next.rigidity_defect = 0.0;
        return Ok(next);
    }
    let fit = project_rigid(&body.reference, &moved)?;
    let mut next = body.clone();
    next.v = [(fit.x[0] - body.x[0]) / dt, (fit.x[1] - body.x[1]) / dt];
    next.w = wrap_angle(fit.theta - body.theta) / dt;
    next.x = fit.x;
    next.theta = body.theta + wrap_angle(fit.theta - body.theta);
    next.markers = body.reference.iter().map(|&y| place(fit.x, next.theta, y)).collect();
    next.rigidity_defect = fit.defect / (moved.len() as f64).sqrt();
    Ok(next)
}

/// Signed distance to the eroded set `O(t)`, positive inside, at cell centers.
/// Discs and rectangles are evaluated analytically.
pub fn chi_field(body: &BodyState, grid: &StaggeredGrid) -> Result<ScalarField> {
    if !polygon_is_simple(body.boundary_markers()) {
        return Err(SimError::SelfIntersection);
    }
    let o = body.eroded_now();
    Ok(ScalarField::from_fn(*grid, Location::Center, |p| signed_distance_primitive(p, &o)))
}

/// Signed distance to the boundary marker polygon, positive inside.
pub fn chi_polygon(body: &BodyState, grid: &StaggeredGrid) -> Result<ScalarField> {
    let verts = body.boundary_markers();
    if !polygon_is_simple(verts) {
        return Err(SimError::SelfIntersection);
    }
    Ok(ScalarField::from_fn(*grid, Location::Center, |p| polygon_signed_distance(p, verts)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GuardStatus {
    pub ok: bool,
    /// `dist(O(t), boundary) - (h + r)`.
    pub margin: f64,
}

pub fn collision_guard(body: &BodyState, lx: f64, ly: f64, h: f64, r: f64) -> GuardStatus {
    let margin = body.eroded_now().wall_clearance(lx, ly) - (h + r);
    GuardStatus { ok: margin >= 0.0, margin }
}

/// `min(T, ((d - h) / c)^2)`, clamped at zero.
pub fn t0_lower_bound(d: f64, h: f64, c_bound: f64, horizon: f64) -> Result<f64> {
    if !(d > h) {
        return Err(SimError::InvalidMargin { d, h });
    }
    if !(c_bound > 0.0) || !(horizon >= 0.0) {
        return Err(SimError::InvalidParams(format!(
            "t0 bound needs c > 0 and T >= 0, got c = {c_bound}, T = {horizon}"
        )));
    }
    let s = (d - h) / c_bound;
    Ok(horizon.min(s * s).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn disc_body(center: Point) -> BodyState {
        BodyState::new(Shape::Disc { center, radius: 0.15 }, 0.03, 1.0, 96, 0.03).unwrap()
    }

    fn setup(n: usize) -> (StaggeredGrid, MollifierKernel) {
        let g = StaggeredGrid::new(n, n, 1.0, 1.0).unwrap();
        let k = MollifierKernel::new(&g, 0.03f64.max(2.0 / n as f64)).unwrap();
        (g, k)
    }

    #[test]
    fn mass_and_inertia_examples() {
        let disc = |radius| Shape::Disc { center: [0.0, 0.0], radius };
        let b = body_mass_inertia(1.0, &disc(1.0), 0.0).unwrap();
        assert!((b.mass - PI).abs() < 1e-15);
        let b = body_mass_inertia(2.0, &disc(1.0), 0.1).unwrap();
        assert!((b.mass - 2.0 * PI).abs() < 1e-15);
        assert!((b.inertia - PI).abs() < 1e-15);
        assert!(matches!(body_mass_inertia(1.0, &disc(0.0), 0.0), Err(SimError::InvalidShape(_))));
    }

    #[test]
    fn zero_velocity_leaves_the_body_unchanged() {
        let (g, k) = setup(48);
        let b = disc_body([0.5, 0.5]);
        let next = body_step(&b, &VectorField::zeros(g), &k, 0.01).unwrap();
        assert_eq!(next.x, b.x);
        assert_eq!(next.theta, b.theta);
        assert_eq!(next.markers, b.markers);
    }

    #[test]
    fn uniform_velocity_translates() {
        let (g, k) = setup(48);
        let c = [0.3, -0.2];
        let u = VectorField::from_fn(g, |_| c);
        let b = disc_body([0.5, 0.5]);
        let dt = 0.01;
        let next = body_step(&b, &u, &k, dt).unwrap();
        assert!((next.x[0] - (0.5 + dt * c[0])).abs() < 1e-12);
        assert!((next.x[1] - (0.5 + dt * c[1])).abs() < 1e-12);
        assert!(next.theta.abs() < 1e-12);
        assert!((next.v[0] - c[0]).abs() < 1e-9 && (next.v[1] - c[1]).abs() < 1e-9);
    }

    #[test]
    fn rigid_velocity_matches_closed_form_rotation() {
        let (g, k) = setup(64);
        let (v0, w0, xc) = ([0.1, 0.05], 2.0, [0.5, 0.5]);
        let u = VectorField::from_fn(g, |p| [v0[0] - w0 * (p[1] - xc[1]), v0[1] + w0 * (p[0] - xc[0])]);
        let b = disc_body(xc);
        for dt in [0.02, 0.01] {
            let next = body_step(&b, &u, &k, dt).unwrap();
            for (m0, m1) in b.markers.iter().zip(&next.markers) {
                // exact flow: rotation about the instantaneous center
                let c = [xc[0] - v0[1] / w0, xc[1] + v0[0] / w0];
                let rot = rotate(w0 * dt, [m0[0] - c[0], m0[1] - c[1]]);
                let exact = [c[0] + rot[0], c[1] + rot[1]];
                let err = dist(*m1, exact);
                assert!(err <= dt * dt * w0 * w0, "dt={dt} err={err}");
            }
            assert!((next.w - w0).abs() < 0.05 * w0);
        }
    }

    #[test]
    fn procrustes_examples() {
        let reference: Vec<Point> = disc_body([0.0, 0.0]).reference;
        let fit = project_rigid(&reference, &reference).unwrap();
        assert_eq!(fit.theta, 0.0);
        assert!(fit.defect < 1e-14);
        let a = PI / 6.0;
        let moved: Vec<Point> = reference.iter().map(|&y| place([1.0, 2.0], a, y)).collect();
        let fit = project_rigid(&reference, &moved).unwrap();
        assert!((fit.theta - a).abs() < 1e-12);
        assert!((fit.x[0] - 1.0).abs() < 1e-12 && (fit.x[1] - 2.0).abs() < 1e-12);
        assert!(fit.defect <= 1e-12);
        let line: Vec<Point> = (0..5).map(|k| [k as f64, 2.0 * k as f64]).collect();
        assert!(matches!(project_rigid(&line, &line), Err(SimError::DegenerateMarkers)));
    }

    #[test]
    fn procrustes_beats_brute_force_search() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let reference: Vec<Point> = disc_body([0.0, 0.0]).reference;
        let sigma = 1e-3;
        let moved: Vec<Point> = reference
            .iter()
            .map(|&y| {
                let p = place([0.2, -0.1], 0.4, y);
                [p[0] + sigma * rng.gen_range(-1.0..1.0), p[1] + sigma * rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let fit = project_rigid(&reference, &moved).unwrap();
        let count = reference.len() as f64;
        assert!(fit.defect > 0.0 && fit.defect < 3.0 * sigma * count.sqrt());
        // brute force over angles with the optimal translation for each
        let mut best = f64::INFINITY;
        for s in 0..20001 {
            let th = 0.3 + 0.2 * s as f64 / 20000.0;
            let rotated: Vec<Point> = reference.iter().map(|&y| rotate(th, y)).collect();
            let shift =
                rotated.iter().zip(&moved).fold([0.0, 0.0], |a, (q, p)| [a[0] + p[0] - q[0], a[1] + p[1] - q[1]]);
            let shift = [shift[0] / count, shift[1] / count];
            let r: f64 = rotated
                .iter()
                .zip(&moved)
                .map(|(q, p)| (q[0] + shift[0] - p[0]).powi(2) + (q[1] + shift[1] - p[1]).powi(2))
                .sum::<f64>()
                .sqrt();
            best = best.min(r);
        }
        assert!(fit.defect <= best + 1e-12);
        assert!(best - fit.defect < 1e-6);
    }

    #[test]
    fn markers_stay_isometric_over_many_steps() {
        let (g, k) = setup(48);
        let u = VectorField::from_fn(g, |p| {
            [0.05 * (3.0 * p[1]).sin() - 0.4 * (p[1] - 0.5), 0.03 * (2.0 * p[0]).cos() + 0.4 * (p[0] - 0.5)]
        });
        let mut b = disc_body([0.5, 0.5]);
        for _ in 0..200 {
            b = body_step(&b, &u, &k, 0.01).unwrap();
            assert!(b.isometry_defect() <= 1e-12);
        }
    }

    #[test]
    fn chi_examples() {
        let g = StaggeredGrid::new(40, 40, 1.0, 1.0).unwrap();
        let b = disc_body([0.5, 0.5]);
        let chi = chi_field(&b, &g).unwrap();
        let at = |p: Point| signed_distance_primitive(p, &b.eroded_now());
        assert!((at([0.5, 0.5]) - 0.12).abs() < 1e-15);
        assert!(at([0.62, 0.5]).abs() < 1e-15);
        assert!(chi.at(0, 0) < 0.0 && chi.at(39, 39) < 0.0);
        assert!(chi.at(20, 20) > 0.0);
        let poly = chi_polygon(&b, &g).unwrap();
        let err = chi.zip_map(&poly, |a, c| (a - c).abs()).max_abs();
        assert!(err < 1e-3, "{err}");
        let mut bad = b.clone();
        bad.markers.swap(0, 40);
        assert!(matches!(chi_field(&bad, &g), Err(SimError::SelfIntersection)));
    }

    #[test]
    fn chi_is_rigid_motion_equivariant() {
        let (g, k) = setup(48);
        let shape = Shape::Rectangle { center: [0.5, 0.5], half: [0.15, 0.1], angle: 0.2 };
        let b = BodyState::new(shape, 0.03, 1.0, 80, 0.03).unwrap();
        let (v0, w0) = ([0.2, -0.1], 1.5);
        let u = VectorField::from_fn(g, |p| [v0[0] - w0 * (p[1] - 0.5), v0[1] + w0 * (p[0] - 0.5)]);
        let next = body_step(&b, &u, &k, 0.01).unwrap();
        let before = b.eroded_now();
        let after = next.eroded_now();
        for y in [[0.02, 0.01], [0.1, -0.05], [-0.2, 0.12], [0.0, 0.0]] {
            let p0 = place(b.x, b.theta, y);
            let p1 = place(next.x, next.theta, y);
            let d = signed_distance_primitive(p1, &after) - signed_distance_primitive(p0, &before);
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn guard_examples() {
        let shape = |c| Shape::Disc { center: c, radius: 0.15 };
        let b = BodyState::new(shape([0.5, 0.5]), 0.03, 1.0, 32, 0.05).unwrap();
        let s = collision_guard(&b, 1.0, 1.0, 0.1, 0.03);
        assert!(s.ok && (s.margin - 0.25).abs() < 1e-12);
        let b = BodyState::new(shape([0.25, 0.5]), 0.03, 1.0, 32, 0.05).unwrap();
        let s = collision_guard(&b, 1.0, 1.0, 0.1, 0.03);
        assert!(s.margin.abs() < 1e-15);
        let b = BodyState::new(shape([0.2, 0.5]), 0.03, 1.0, 32, 0.05).unwrap();
        assert!(!collision_guard(&b, 1.0, 1.0, 0.1, 0.03).ok);
    }

    #[test]
    fn escaping_markers_are_reported() {
        let (g, k) = setup(48);
        let b = BodyState::new(Shape::Disc { center: [0.2, 0.5], radius: 0.19 }, 0.0, 1.0, 32, 0.05).unwrap();
        let r = body_step(&b, &VectorField::zeros(g), &k, 0.01);
        assert!(matches!(r, Err(SimError::MarkerEscaped { .. })));
    }

    #[test]
    fn t0_examples() {
        assert!((t0_lower_bound(0.3, 0.1, 0.2, 10.0).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(t0_lower_bound(0.3, 0.1, f64::INFINITY, 10.0).unwrap(), 0.0);
        assert_eq!(t0_lower_bound(0.3, 0.1, 0.2, 0.5).unwrap(), 0.5);
        assert!(matches!(t0_lower_bound(0.1, 0.1, 1.0, 1.0), Err(SimError::InvalidMargin { .. })));
    }

    proptest! {
        #[test]
        fn translated_and_rotated_markers_are_recovered(
            a in -3.0..3.0f64, tx in -1.0..1.0f64, ty in -1.0..1.0f64,
        ) {
            let reference = disc_body([0.0, 0.0]).reference;
            let moved: Vec<Point> = reference.iter().map(|&y| place([tx, ty], a, y)).collect();
            let fit = project_rigid(&reference, &moved).unwrap();
            prop_assert!(wrap_angle(fit.theta - a).abs() < 1e-12);
            prop_assert!(fit.defect < 1e-12);
        }
    }
}
