use super::{Location, ScalarField, StaggeredGrid, TensorField, VectorField};
use crate::exec::Exec;

/// Conservative cell-centered divergence of a face field.
pub fn divergence(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let mut out = ScalarField::zeros(g, Location::Center);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let d = (u.ux.at(i + 1, j) - u.ux.at(i, j)) / g.dx + (u.uy.at(i, j + 1) - u.uy.at(i, j)) / g.dy;
            out.set(i, j, d);
        }
    }
    out
}

/// Face gradient of a cell-centered scalar. Boundary faces carry zero
/// (homogeneous Neumann), traces are zero.
pub fn face_gradient(p: &ScalarField) -> VectorField {
    debug_assert_eq!(p.loc, Location::Center);
    let g = p.grid;
    let mut u = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            u.ux.set(i, j, (p.at(i, j) - p.at(i - 1, j)) / g.dx);
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            u.uy.set(i, j, (p.at(i, j) - p.at(i, j - 1)) / g.dy);
        }
    }
    u
}

/// Five-point Laplacian with zero-flux walls.
pub fn laplacian_neumann(p: &ScalarField) -> ScalarField {
    divergence(&face_gradient(p))
}

#[inline]
pub(crate) fn dy_ux_at_node(u: &VectorField, i: usize, j: usize) -> f64 {
    let g = u.ux.grid;
    if j == 0 {
        2.0 * (u.ux.at(i, 0) - u.traces.bottom[i]) / g.dy
    } else if j == g.ny {
        2.0 * (u.traces.top[i] - u.ux.at(i, g.ny - 1)) / g.dy
    } else {
        (u.ux.at(i, j) - u.ux.at(i, j - 1)) / g.dy
    }
}

#[inline]
pub(crate) fn dx_uy_at_node(u: &VectorField, i: usize, j: usize) -> f64 {
    let g = u.ux.grid;
    if i == 0 {
        2.0 * (u.uy.at(0, j) - u.traces.left[j]) / g.dx
    } else if i == g.nx {
        2.0 * (u.traces.right[j] - u.uy.at(g.nx - 1, j)) / g.dx
    } else {
        (u.uy.at(i, j) - u.uy.at(i - 1, j)) / g.dx
    }
}

/// Shear rate `D_xy = (du_x/dy + du_y/dx) / 2` on nodes. Wall nodes use
/// the tangential traces as Dirichlet data.
pub fn node_shear(u: &VectorField) -> ScalarField {
    let g = u.grid();
    let mut out = ScalarField::zeros(g, Location::Node);
    for j in 0..=g.ny {
        for i in 0..=g.nx {
            out.set(i, j, 0.5 * (dy_ux_at_node(u, i, j) + dx_uy_at_node(u, i, j)));
        }
    }
    out
}

/// Symmetric gradient `D(u)` at cell centers.
pub fn sym_gradient(u: &VectorField) -> TensorField {
    let g = u.grid();
    let shear = node_shear(u);
    let mut t = TensorField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            t.xx.set(i, j, (u.ux.at(i + 1, j) - u.ux.at(i, j)) / g.dx);
            t.yy.set(i, j, (u.uy.at(i, j + 1) - u.uy.at(i, j)) / g.dy);
            let s = 0.25 * (shear.at(i, j) + shear.at(i + 1, j) + shear.at(i, j + 1) + shear.at(i + 1, j + 1));
            t.xy.set(i, j, s);
        }
    }
    t
}

/// `|D(u)|^2 = D_xx^2 + D_yy^2 + 2 D_xy^2` per cell.
pub fn sym_gradient_norm_sq(u: &VectorField) -> ScalarField {
    let d = sym_gradient(u);
    let mut out = ScalarField::zeros(u.grid(), Location::Center);
    for k in 0..out.data.len() {
        out.data[k] = d.xx.data[k].powi(2) + d.yy.data[k].powi(2) + 2.0 * d.xy.data[k].powi(2);
    }
    out
}

/// Quadrature `sum f * weight` over the optional mask. The summation order
/// is fixed, so the result is reproducible bit for bit.
pub fn integrate(f: &ScalarField, mask: Option<&[bool]>) -> f64 {
    let g: StaggeredGrid = f.grid;
    let w = f.width();
    if let Some(m) = mask {
        assert_eq!(m.len(), f.data.len(), "mask does not match field layout");
    }
    Exec::Serial.sum(f.data.len(), |k| {
        if mask.is_some_and(|m| !m[k]) {
            return 0.0;
        }
        f.data[k] * g.weight(f.loc, k % w, k / w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> StaggeredGrid {
        StaggeredGrid::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn divergence_of_linear_fields() {
        let g = grid(16);
        let u = VectorField::from_fn(g, |p| [p[0], -p[1]]);
        assert!(divergence(&u).max_abs() < 1e-12);
        let u = VectorField::from_fn(g, |p| [p[0], p[1]]);
        let d = divergence(&u);
        assert!(d.data.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn divergence_is_second_order_on_smooth_fields() {
        let err = |n: usize| {
            let g = grid(n);
            let u = VectorField::from_fn(g, |p| [p[0].sin(), 0.0]);
            let d = divergence(&u);
            let exact = ScalarField::from_fn(g, Location::Center, |p| p[0].cos());
            d.zip_map(&exact, |a, b| a - b).max_abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 < 1.0 / (16.0f64 * 16.0));
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn sym_gradient_examples() {
        let g = grid(12);
        let d = sym_gradient(&VectorField::from_fn(g, |p| [p[0], p[1]]));
        assert!(d.xx.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(d.yy.data.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(d.xy.max_abs() < 1e-12);
        let d = sym_gradient(&VectorField::from_fn(g, |p| [p[1], 0.0]));
        assert!(d.xx.max_abs() < 1e-12 && d.yy.max_abs() < 1e-12);
        assert!(d.xy.data.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn rigid_fields_are_in_the_kernel_of_d() {
        let g = grid(20);
        let (v, w, c) = ([0.3, -0.7], 1.9, [0.4, 0.55]);
        let u = VectorField::from_fn(g, |p| [v[0] - w * (p[1] - c[1]), v[1] + w * (p[0] - c[0])]);
        assert!(sym_gradient(&u).max_abs() < 1e-12);
        assert!(node_shear(&u).max_abs() < 1e-12);
    }

    #[test]
    fn div_grad_is_the_five_point_laplacian() {
        let g = grid(10);
        let p = ScalarField::from_fn(g, Location::Center, |x| (3.0 * x[0]).sin() * (PI * x[1]).cos() + x[0] * x[1]);
        let lap = laplacian_neumann(&p);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let five = (p.at(i + 1, j) - 2.0 * p.at(i, j) + p.at(i - 1, j)) / (g.dx * g.dx)
                    + (p.at(i, j + 1) - 2.0 * p.at(i, j) + p.at(i, j - 1)) / (g.dy * g.dy);
                assert!((lap.at(i, j) - five).abs() < 1e-9 * five.abs().max(1.0));
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid(16);
        let one = ScalarField::constant(g, Location::Center, 1.0);
        assert!((integrate(&one, None) - 1.0).abs() < 1e-12);
        assert_eq!(integrate(&ScalarField::zeros(g, Location::Center), None), 0.0);
        let x = ScalarField::from_fn(g, Location::Center, |p| p[0]);
        assert!((integrate(&x, None) - 0.5).abs() <= g.dx * g.dx);
    }

    #[test]
    fn integrate_is_additive_over_disjoint_masks() {
        let g = grid(16);
        let f = ScalarField::from_fn(g, Location::Center, |p| (p[0] * 7.0).sin() + p[1]);
        let a: Vec<bool> = f.data.iter().enumerate().map(|(k, _)| k % 3 == 0).collect();
        let b: Vec<bool> = a.iter().map(|v| !v).collect();
        let total = integrate(&f, None);
        let split = integrate(&f, Some(&a)) + integrate(&f, Some(&b));
        assert!((total - split).abs() < 1e-13);
    }
}
