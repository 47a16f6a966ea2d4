//! Extension of boundary velocity data into a collar of the walls.
//!
//! Each wall's normal datum is carried inward unchanged across the cells of
//! `U_c` (c the collar width) and then decays linearly to zero at distance
//! `2c`. The decay of an inflow datum has negative divergence; where that
//! band crosses the collar of a perpendicular wall, the perpendicular wall
//! receives a compensating normal field that vanishes on its own boundary,
//! grows linearly through its collar (positive divergence there) and returns
//! to zero before `2c`. Tangential data are carried the same way, tapered to
//! zero near the corners, and compensated likewise.

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::fields::{divergence, StaggeredGrid, VectorField};

/// Piecewise-linear wall-normal profiles for one grid direction.
#[derive(Debug, Clone, Copy)]
struct Profile {
    /// End of the plateau: the face just past the last cell whose center lies in `U_c`.
    s1: f64,
    /// Outer edge of the support, `2c`.
    s2: f64,
    /// Number of cells with center in `U_c`.
    cells: usize,
}

impl Profile {
    fn new(d: f64, n: usize, collar: f64) -> Result<Self> {
        let cells = (0..n).take_while(|&m| (m as f64 + 0.5) * d < collar).count();
        let s1 = cells as f64 * d;
        let s2 = 2.0 * collar;
        if cells == 0 || s1 >= s2 {
            return Err(SimError::InvalidParams(format!("extension collar {collar} is not resolved by spacing {d}")));
        }
        Ok(Self { s1, s2, cells })
    }

    fn plateau(&self, s: f64) -> f64 {
        if s <= self.s1 {
            1.0
        } else if s < self.s2 {
            (self.s2 - s) / (self.s2 - self.s1)
        } else {
            0.0
        }
    }

    fn dip(&self, s: f64) -> f64 {
        if s <= self.s1 {
            -s
        } else if s < self.s2 {
            -self.s1 * (self.s2 - s) / (self.s2 - self.s1)
        } else {
            0.0
        }
    }

    fn ramp(&self, s: f64) -> f64 {
        1.0 - self.plateau(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtensionReport {
    pub collar: f64,
    /// `max |u_inf|`.
    pub sup_norm: f64,
    /// Largest difference quotient between neighboring samples.
    pub lipschitz: f64,
    /// Largest compensating amplitude added at a wall.
    pub compensation: f64,
}

/// Builds `u_inf` from the boundary values stored in `u_b` (normal faces on
/// the walls plus wall traces).
pub fn build_extension(u_b: &VectorField, collar: f64) -> Result<(VectorField, ExtensionReport)> {
    let g = u_b.grid();
    let (lx, ly) = (g.lx(), g.ly());
    let half = 0.5 * lx.min(ly);
    if !(collar > 0.0) || 2.0 * collar > half {
        return Err(SimError::CollarTooWide { collar: 2.0 * collar, half_width: half });
    }
    let px = Profile::new(g.dx, g.nx, collar)?;
    let py = Profile::new(g.dy, g.ny, collar)?;

    let mut u = VectorField::zeros(g);
    for j in 0..g.ny {
        let y = (j as f64 + 0.5) * g.dy;
        for i in 0..=g.nx {
            let x = i as f64 * g.dx;
            let normal = u_b.ux.at(0, j) * px.plateau(x) + u_b.ux.at(g.nx, j) * px.plateau(lx - x);
            let tangential = u_b.traces.bottom[i] * py.plateau(y) + u_b.traces.top[i] * py.plateau(ly - y);
            u.ux.set(i, j, normal + px.ramp(x.min(lx - x)) * tangential);
        }
    }
    for j in 0..=g.ny {
        let y = j as f64 * g.dy;
        for i in 0..g.nx {
            let x = (i as f64 + 0.5) * g.dx;
            let normal = u_b.uy.at(i, 0) * py.plateau(y) + u_b.uy.at(i, g.ny) * py.plateau(ly - y);
            let tangential = u_b.traces.left[j] * px.plateau(x) + u_b.traces.right[j] * px.plateau(lx - x);
            u.uy.set(i, j, normal + py.ramp(y.min(ly - y)) * tangential);
        }
    }

    let div = divergence(&u);
    let deficit = |i: usize, j: usize| (-div.at(i, j)).max(0.0);
    let row_free = |j: usize| j >= py.cells && j < g.ny - py.cells;
    let col_free = |i: usize| i >= px.cells && i < g.nx - px.cells;
    let mut left = vec![0.0; g.ny];
    let mut right = vec![0.0; g.ny];
    for j in (0..g.ny).filter(|&j| row_free(j)) {
        for m in 0..px.cells {
            left[j] = f64::max(left[j], deficit(m, j));
            right[j] = f64::max(right[j], deficit(g.nx - 1 - m, j));
        }
    }
    let mut bottom = vec![0.0; g.nx];
    let mut top = vec![0.0; g.nx];
    for i in (0..g.nx).filter(|&i| col_free(i)) {
        for m in 0..py.cells {
            bottom[i] = f64::max(bottom[i], deficit(i, m));
            top[i] = f64::max(top[i], deficit(i, g.ny - 1 - m));
        }
    }
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let x = i as f64 * g.dx;
            let add = -left[j] * px.dip(x) + right[j] * px.dip(lx - x);
            if add != 0.0 {
                u.ux.set(i, j, u.ux.at(i, j) + add);
            }
        }
    }
    for j in 0..=g.ny {
        let y = j as f64 * g.dy;
        for i in 0..g.nx {
            let add = -bottom[i] * py.dip(y) + top[i] * py.dip(ly - y);
            if add != 0.0 {
                u.uy.set(i, j, u.uy.at(i, j) + add);
            }
        }
    }
    u.traces = u_b.traces.clone();

    let compensation = [&left, &right, &bottom, &top].iter().flat_map(|v| v.iter()).fold(0.0f64, |m, &v| m.max(v));
    let report = ExtensionReport { collar, sup_norm: u.max_abs(), lipschitz: lipschitz(&u), compensation };
    Ok((u, report))
}

fn lipschitz(u: &VectorField) -> f64 {
    let g = u.grid();
    let mut m = 0.0f64;
    for f in [&u.ux, &u.uy] {
        let (w, h) = (f.width(), f.height());
        for j in 0..h {
            for i in 0..w {
                if i + 1 < w {
                    m = m.max((f.at(i + 1, j) - f.at(i, j)).abs() / g.dx);
                }
                if j + 1 < h {
                    m = m.max((f.at(i, j + 1) - f.at(i, j)).abs() / g.dy);
                }
            }
        }
    }
    m
}

/// Grid-pointwise status of the three extension clauses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtensionCheck {
    /// Largest mismatch against the boundary data on boundary faces and traces.
    pub trace_error: f64,
    /// Smallest divergence over cells whose center lies in `U_c`.
    pub min_div_collar: f64,
    /// Largest `|u_inf|` over samples at distance `>= 2c` from the walls.
    pub max_outside: f64,
}

impl ExtensionCheck {
    pub fn passed(&self) -> bool {
        self.trace_error <= 1e-10 && self.min_div_collar >= -1e-12 && self.max_outside == 0.0
    }
}

pub fn check_extension(u_b: &VectorField, u_inf: &VectorField, collar: f64) -> ExtensionCheck {
    let g: StaggeredGrid = u_b.grid();
    let mut trace_error = 0.0f64;
    for j in 0..g.ny {
        for i in [0, g.nx] {
            trace_error = trace_error.max((u_inf.ux.at(i, j) - u_b.ux.at(i, j)).abs());
        }
    }
    for i in 0..g.nx {
        for j in [0, g.ny] {
            trace_error = trace_error.max((u_inf.uy.at(i, j) - u_b.uy.at(i, j)).abs());
        }
    }
    let t = [
        (&u_inf.traces.bottom, &u_b.traces.bottom),
        (&u_inf.traces.top, &u_b.traces.top),
        (&u_inf.traces.left, &u_b.traces.left),
        (&u_inf.traces.right, &u_b.traces.right),
    ];
    for (a, b) in t {
        for (x, y) in a.iter().zip(b.iter()) {
            trace_error = trace_error.max((x - y).abs());
        }
    }
    let div = divergence(u_inf);
    let mut min_div_collar = f64::INFINITY;
    for k in 0..div.data.len() {
        if g.wall_distance(div.position(k)) < collar {
            min_div_collar = min_div_collar.min(div.data[k]);
        }
    }
    let mut max_outside = 0.0f64;
    for f in [&u_inf.ux, &u_inf.uy] {
        for k in 0..f.data.len() {
            if g.wall_distance(f.position(k)) >= 2.0 * collar {
                max_outside = max_outside.max(f.data[k].abs());
            }
        }
    }
    ExtensionCheck { trace_error, min_div_collar, max_outside }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryData, DomainSpec, Wall};

    fn build(n: usize, u_b: impl Fn(Wall, [f64; 2]) -> [f64; 2]) -> BoundaryData {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 };
        let g = StaggeredGrid::new(n, n, 1.0, 1.0).unwrap();
        BoundaryData::new(&d, g, u_b, |_, _| 1.0).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_extension() {
        let bd = build(32, |_, _| [0.0, 0.0]);
        assert_eq!(bd.u_inf.max_abs(), 0.0);
    }

    #[test]
    fn through_flow_satisfies_all_clauses() {
        for n in [48, 64, 96, 128] {
            let bd = build(n, |w, _| match w {
                Wall::Left | Wall::Right => [0.2, 0.0],
                _ => [0.0, 0.0],
            });
            let c = check_extension(&bd.u_b, &bd.u_inf, 0.05);
            assert!(c.passed(), "n={n}: {c:?}");
            assert!(bd.extension.compensation > 0.0);
        }
    }

    #[test]
    fn general_data_satisfies_all_clauses() {
        let bd = build(80, |w, p| match w {
            Wall::Left => [0.3 + 0.2 * (6.0 * p[1]).sin(), 0.1 * p[1]],
            Wall::Right => [-0.1 + 0.4 * p[1] * p[1], -0.2],
            Wall::Bottom => [0.5 * (3.0 * p[0]).cos(), 0.2 * (p[0] - 0.5)],
            Wall::Top => [-0.3 * p[0], -0.15],
        });
        let c = check_extension(&bd.u_b, &bd.u_inf, 0.05);
        assert!(c.passed(), "{c:?}");
    }

    #[test]
    fn collar_must_fit() {
        let g = StaggeredGrid::new(32, 32, 1.0, 1.0).unwrap();
        let u = VectorField::zeros(g);
        assert!(matches!(build_extension(&u, 0.3), Err(SimError::CollarTooWide { .. })));
    }
}
